"""Monte Carlo harness: run a model, histogram the outcomes, compare with theory.

Every trial draws from its own counter-based stream keyed by
``(master_seed, trial_index)``, so results do not depend on how trials are
spread over worker threads.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction

import numpy as np
from scipy.stats import chi2

from . import _backend, theory
from ._validation import is_prime, prime_power, trial_rng
from .alt_model import PairingClass, StratumSpec, standard_alternating
from .exceptions import (
    ConfigError,
    DegenerateBuckets,
    InternalInconsistency,
    InvalidStratum,
    TheoryUnavailable,
)
from .padic_linalg import PadicCtx, Partition
from .quadratic_space import enumerate_ogr

SCHEMA_VERSION = 1
KINDS = (
    "coker",
    "coker_exhaustive",
    "stratum",
    "rst",
    "moment",
    "igusa",
    "pairing_match",
    "global_sha",
    "kernel_dim",
    "uniformity",
)
PARTITION_KINDS = ("coker", "coker_exhaustive", "stratum", "igusa", "moment")
SWEEP_KINDS = ("coker", "stratum", "rst")

Z_LIMIT = 4.0
Z_MIN_EXPECTED = 10
CHI_MIN_EXPECTED = 5
P_VALUE_FLOOR = 1e-3
LAW_TAIL = 1e-7
LAW_MAX_K = 20
EXHAUSTIVE_LIMIT = 10**6
GLOBAL_SHA_EXTRA = 10


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one run. Unused fields are ignored by the chosen kind.

    For ``rst``, ``moment`` and ``uniformity`` the size ``n`` is the half-rank
    of the hyperbolic module; for the matrix kinds it is the matrix size.
    """

    kind: str
    p: int = 2
    E: int = 8
    n: int = 4
    r: int = 0
    m: int = 1
    q: int | None = None
    s: int = 1
    e_list: tuple[int, ...] = ()
    trials: int = 10_000
    master_seed: int = 0
    E_cap: int | None = None
    E0: int = 2
    prime_set: tuple[int, ...] = (2, 3, 5, 7, 11, 13)

    def __post_init__(self):
        object.__setattr__(self, "e_list", tuple(int(e) for e in self.e_list))
        object.__setattr__(self, "prime_set", tuple(int(p) for p in self.prime_set))
        if self.E_cap is None:
            object.__setattr__(self, "E_cap", 4 * int(self.E))
        if self.kind == "moment" and self.q is None:
            object.__setattr__(self, "q", int(self.p))
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must lie in [0, 2^64)")
        if not is_prime(self.p):
            raise ConfigError(f"p must be prime, got {self.p}")
        if self.E < 1 or self.E > self.E_cap:
            raise ConfigError(f"need 1 <= E <= E_cap, got E={self.E}, E_cap={self.E_cap}")
        if self.n < 0:
            raise ConfigError("n must be >= 0")
        kind = self.kind
        if kind in ("coker", "coker_exhaustive", "igusa") and self.n % 2:
            raise ConfigError(f"{kind} needs an even matrix size, got n={self.n}")
        if kind == "coker_exhaustive":
            if not 1 <= self.E0 <= self.E:
                raise ConfigError(f"need 1 <= E0 <= E, got E0={self.E0}")
            if self.exhaustive_count() > EXHAUSTIVE_LIMIT:
                raise ConfigError(f"{self.exhaustive_count()} base matrices exceed {EXHAUSTIVE_LIMIT}")
        if kind in ("stratum", "global_sha"):
            try:
                StratumSpec(self.stratum_size(), self.r)
            except InvalidStratum as exc:
                raise ConfigError(str(exc)) from None
        if kind in ("stratum", "rst") and self.E < 3:
            raise ConfigError(f"{kind} needs E >= 3")
        if kind == "rst" and self.r not in (0, 1):
            raise TheoryUnavailable(f"no law for rank r={self.r}: only r in {{0, 1}} occurs")
        if kind == "moment":
            try:
                qp, _ = prime_power(self.q)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if qp != self.p:
                raise ConfigError(f"q={self.q} is not a power of p={self.p}")
            if not 0 <= self.m <= self.n:
                raise ConfigError(f"need 0 <= m <= n, got m={self.m}, n={self.n}")
        if kind == "igusa" and self.s < 0:
            raise ConfigError("s must be >= 0")
        if kind == "pairing_match":
            if not self.e_list or min(self.e_list) < 0:
                raise ConfigError("pairing_match needs a nonempty e_list of exponents >= 0")
            if 2 * max(self.e_list) > self.E:
                raise ConfigError(f"E={self.E} is below the congruence depth {2 * max(self.e_list)}")
        if kind == "global_sha":
            if not self.prime_set or not all(is_prime(p) for p in self.prime_set):
                raise ConfigError(f"prime_set must be nonempty primes, got {list(self.prime_set)}")
            if self.E < 3:
                raise ConfigError("global_sha needs E >= 3")

    def stratum_size(self) -> int:
        return self.r + GLOBAL_SHA_EXTRA if self.kind == "global_sha" else self.n

    def exhaustive_count(self) -> int:
        return self.p ** (self.E0 * self.n * (self.n - 1) // 2)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["e_list"] = list(self.e_list)
        out["prime_set"] = list(self.prime_set)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "kind" not in data:
            raise ConfigError("config needs a 'kind'")
        kwargs = dict(data)
        for key in ("e_list", "prime_set"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- class keys


def class_label(kind: str, key) -> str:
    """Stable text form of an outcome, used as the JSON/CSV key."""
    if kind in PARTITION_KINDS:
        return key.label()
    if kind == "rst":
        r, T = key
        return f"r={r};{T.label()}"
    if kind == "global_sha":
        return "|".join(f"{p}:{part.label()}" for p, part in key)
    if kind == "kernel_dim":
        return str(key)
    if kind == "pairing_match":
        return key
    if kind == "uniformity":
        return ",".join(str(x) for x in key)
    raise ConfigError(f"unknown kind {kind!r}")


def parse_class_label(kind: str, text: str):
    if kind in PARTITION_KINDS:
        return Partition.parse(text)
    if kind == "rst":
        head, _, tail = text.partition(";")
        return (int(head.removeprefix("r=")), Partition.parse(tail))
    if kind == "global_sha":
        if not text:
            return ()
        parts = []
        for chunk in text.split("|"):
            p, _, lab = chunk.partition(":")
            parts.append((int(p), Partition.parse(lab)))
        return tuple(parts)
    if kind == "kernel_dim":
        return int(text)
    if kind == "pairing_match":
        return text
    if kind == "uniformity":
        return tuple(int(x) for x in text.split(",")) if text else ()
    raise ConfigError(f"unknown kind {kind!r}")


def pretty_label(kind: str, key, p: int) -> str:
    if kind in PARTITION_KINDS:
        return key.pretty(p)
    if kind == "rst":
        r, T = key
        return f"r={r}, T={T.pretty(p)}"
    if kind == "global_sha":
        return " × ".join(part.pretty(ell) for ell, part in key) if key else "0"
    return class_label(kind, key)


def _sort_key(kind: str, key):
    if kind in PARTITION_KINDS:
        return (sum(key), tuple(-e for e in key))
    if kind == "rst":
        return (key[0], sum(key[1]), tuple(-e for e in key[1]))
    if kind == "global_sha":
        return (len(key), tuple((p, sum(part), tuple(part)) for p, part in key))
    if kind == "pairing_match":
        return (key != "match",)
    return (key,)


# ---------------------------------------------------------------- result types


@dataclass
class EmpiricalDist:
    """Outcome histogram of a run; unresolved trials are kept out of ``counts``."""

    kind: str
    counts: dict
    trials: int
    unresolved_count: int
    master_seed: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.counts.values()) + self.unresolved_count != self.trials:
            raise InternalInconsistency("counts and unresolved trials do not add up to the trial count")

    @property
    def resolved(self) -> int:
        return self.trials - self.unresolved_count

    def probabilities(self) -> dict:
        total = self.resolved
        return {k: c / total for k, c in self.counts.items()} if total else {}

    def sorted_keys(self) -> list:
        return sorted(self.counts, key=lambda k: _sort_key(self.kind, k))


@dataclass
class ClassRow:
    label: str
    count: int
    empirical: float
    theory: float | None = None
    theory_exact: str | None = None
    z_score: float | None = None
    limit: float | None = None


@dataclass
class ChiSquare:
    stat: float
    dof: int
    p_value: float
    buckets: int


@dataclass
class Check:
    name: str
    value: float
    target: float
    tolerance: float
    passed: bool


@dataclass
class ComparisonReport:
    kind: str
    theory_name: str | None
    rows: list[ClassRow]
    chi_square: ChiSquare | None
    tv_distance: float | None
    tail_mass_bucketed: float
    statistics: dict
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def row(self, label: str) -> ClassRow | None:
        return next((r for r in self.rows if r.label == label), None)

    def check(self, name: str) -> Check | None:
        return next((c for c in self.checks if c.name == name), None)


# ---------------------------------------------------------------- statistics


def _as_probs(d) -> dict:
    if isinstance(d, EmpiricalDist):
        return d.probabilities()
    return {k: float(v) for k, v in d.items()}


def tv_distance(d1, d2) -> float:
    """Total variation distance between two distributions given as dicts or EmpiricalDist."""
    a, b = _as_probs(d1), _as_probs(d2)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))


def tv_to_truncated(counts: dict, law: dict) -> float:
    """TV between an empirical histogram and a law listed on part of the support.

    Outcomes missing from ``law`` and the law's unlisted mass share one tail bucket.
    """
    total = sum(counts.values())
    if total == 0:
        raise ValueError("empty histogram")
    listed = sum(law.values())
    diff = sum(abs(counts.get(k, 0) / total - float(v)) for k, v in law.items())
    outside = sum(c for k, c in counts.items() if k not in law) / total
    return 0.5 * (diff + abs(outside - max(0.0, 1.0 - listed)))


def z_score(count: int, total: int, prob: float) -> float:
    """Standardized deviation with the binomial error under the theory probability."""
    if total == 0:
        return 0.0
    emp = count / total
    if prob <= 0.0 or prob >= 1.0:
        return 0.0 if emp == prob else math.copysign(math.inf, emp - prob)
    return (emp - prob) / math.sqrt(prob * (1 - prob) / total)


def chi_square(counts: dict, theory_probs: dict, min_expected: float = CHI_MIN_EXPECTED) -> ChiSquare:
    """Pearson goodness of fit; classes with small expected counts share a tail bucket.

    The tail bucket also takes outcomes absent from ``theory_probs`` and the
    theory mass left unlisted. If the tail itself stays small it is merged
    into the smallest kept bucket.
    """
    total = sum(counts.values())
    kept_obs, kept_exp = [], []
    tail_obs, tail_exp = 0.0, 0.0
    for key, prob in theory_probs.items():
        exp = total * float(prob)
        obs = counts.get(key, 0)
        if exp >= min_expected:
            kept_obs.append(obs)
            kept_exp.append(exp)
        else:
            tail_obs += obs
            tail_exp += exp
    tail_obs += sum(c for k, c in counts.items() if k not in theory_probs)
    tail_exp += max(0.0, total - sum(kept_exp) - tail_exp)
    if tail_exp >= min_expected:
        kept_obs.append(tail_obs)
        kept_exp.append(tail_exp)
    elif kept_exp and (tail_obs or tail_exp):
        i = int(np.argmin(kept_exp))
        kept_obs[i] += tail_obs
        kept_exp[i] += tail_exp
    dof = len(kept_exp) - 1
    if dof < 1:
        raise DegenerateBuckets(f"only {len(kept_exp)} bucket(s) with expected count >= {min_expected}")
    obs = np.array(kept_obs, dtype=float)
    exp = np.array(kept_exp, dtype=float)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return ChiSquare(stat, dof, float(chi2.sf(stat, dof)), len(kept_exp))


def bootstrap_tv_se(counts: dict, law: dict, reps: int = 200, seed: int = 0) -> float:
    """Standard error of tv_to_truncated by multinomial resampling of the histogram."""
    keys = list(counts)
    total = sum(counts.values())
    probs = np.array([counts[k] for k in keys], dtype=float) / total
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xB0]))
    values = []
    for _ in range(reps):
        draw = rng.multinomial(total, probs)
        values.append(tv_to_truncated(dict(zip(keys, draw.tolist())), law))
    return float(np.std(values, ddof=1))


# ---------------------------------------------------------------- theory laws


def partition_law(p: int, n: int, r: int, finite: bool, extra=()) -> tuple[dict, dict]:
    """Law of coker torsion on the corank-r stratum of n x n matrices.

    Lists every symplectic type of order p^(2k) for k up to the point where
    the unlisted mass drops below a small threshold, plus the types in
    ``extra``. Returns ``(exact, limit)``: exact finite-n Fractions (empty if
    ``finite`` is False) and limit floats.
    """
    exact, limit = {}, {}
    core = n - r
    mass = Fraction(0)
    for k in range(LAW_MAX_K + 1):
        for G in theory.symplectic_types(p, k):
            if finite:
                if G.p_rank > core:
                    continue
                exact[G.part] = theory.stratum_finite(G, n, r)
                mass += exact[G.part]
            limit[G.part] = theory.pi_limit(G, r)
        covered = float(mass) if finite else sum(limit.values())
        if 1 - covered < LAW_TAIL:
            break
    for part in extra:
        if part in limit or not Partition(part).is_symplectic():
            continue
        G = theory.SymplecticType(p, part)
        limit[G.part] = theory.pi_limit(G, r)
        if finite and G.p_rank <= core:
            exact[G.part] = theory.stratum_finite(G, n, r)
    return exact, limit


def limit_law(p: int, r: int) -> dict:
    return partition_law(p, r, r, finite=False)[1]


# ---------------------------------------------------------------- runner


def _schedule(E: int, cap: int) -> list[int]:
    out = [E]
    while out[-1] < cap:
        out.append(min(2 * out[-1], cap))
    return out


def _fast_cap(p: int, E: int, cap: int) -> int | None:
    """Largest precision on the schedule the compiled kernels can carry."""
    limit = _backend.fast_limit(p)
    fitting = [e for e in _schedule(E, cap) if e <= limit]
    return fitting[-1] if fitting else None


class _Trials:
    """Per-kind trial logic. ``trial(t)`` returns (key or None, diagnostics tuple)."""

    DIAG = ("escalated", "wide_replays", "boundary_events", "rank_ge_2")

    def __init__(self, config: ExperimentConfig):
        self.config = config
        c = config
        self.fast = None
        self.wide = None
        if c.kind == "global_sha":
            self.prime_caps = {p: _fast_cap(p, c.E, c.E_cap) for p in c.prime_set}
        else:
            self.fast_cap = _fast_cap(c.p, c.E, c.E_cap)
        if c.kind == "coker_exhaustive":
            self.base_count = c.exhaustive_count()
        if c.kind == "pairing_match":
            ctx = PadicCtx(c.p, c.E)
            self.pairing = PairingClass(standard_alternating(c.e_list, ctx), ctx)
            if not self.pairing.exact():
                raise ConfigError("precision too small for the pairing congruences")

    def kernels(self):
        if self.fast is None:
            self.fast = _backend.compiled()
            self.wide = _backend.wide()
        return self.fast, self.wide

    def escalate(self, seed_index: int, p: int, fast_cap, call):
        """Run on the compiled kernels, replaying on wide ints if more precision is needed.

        ``call(kernels, rng, cap, final)`` returns (status, payload). Both
        backends consume the trial stream identically, so a replay reproduces
        the compiled run up to the point where it stopped.
        """
        c = self.config
        fast, wide = self.kernels()
        if fast_cap is not None:
            final = c.E_cap <= fast_cap
            status, payload = call(fast, trial_rng(c.master_seed, seed_index), fast_cap, final)
            if status != fast.NEED_MORE or final:
                return status, payload, 0
        status, payload = call(wide, trial_rng(c.master_seed, seed_index), c.E_cap, True)
        return status, payload, 1

    def trial(self, t: int):
        return getattr(self, "_" + self.config.kind)(t)

    def _coker_like(self, t, call):
        c = self.config
        status, (exps, Ecur), wide = self.escalate(t, c.p, self.fast_cap, call)
        esc = int(Ecur > c.E)
        if status != 0:
            return None, (esc, wide, 0, 0)
        return Partition(int(e) for e in exps if 0 < e < Ecur), (esc, wide, 0, 0)

    def _coker(self, t):
        c = self.config

        def call(k, rng, cap, final):
            exps, Ecur, status = k.coker_trial(rng, c.n, c.p, c.E, cap)
            return status, (exps, Ecur)

        return self._coker_like(t, call)

    _igusa = _coker

    def _coker_exhaustive(self, t):
        c = self.config
        idx = t % self.base_count
        base = c.p**c.E0
        digits = []
        for _ in range(c.n * (c.n - 1) // 2):
            idx, d = divmod(idx, base)
            digits.append(d)

        def call(k, rng, cap, final):
            A0 = np.zeros((c.n, c.n), dtype=k.INT)
            q = c.p**c.E
            pos = 0
            for i in range(c.n):
                for j in range(i + 1, c.n):
                    A0[i, j] = digits[pos]
                    A0[j, i] = (q - digits[pos]) % q
                    pos += 1
            exps, Ecur, status = k.coker_lift_trial(rng, A0, c.p, c.E0, c.E, cap)
            return status, (exps, Ecur)

        return self._coker_like(t, call)

    def _stratum_at(self, seed_index, p, n, r, fast_cap):
        c = self.config

        def call(k, rng, cap, final):
            exps, Ecur, _, _, boundary, status = k.stratum_trial(rng, n, r, p, c.E, cap, 2, final)
            return status, (exps, Ecur, boundary)

        status, (exps, Ecur, boundary), wide = self.escalate(seed_index, p, fast_cap, call)
        if status != 0:
            raise InternalInconsistency("stratum sampler returned without a certified core")
        free = sum(1 for e in exps if e >= Ecur)
        if free != r:
            raise InternalInconsistency(f"sampled matrix has corank {free}, expected {r}")
        return Partition(int(e) for e in exps if 0 < e < Ecur), (int(Ecur > c.E), wide, int(boundary), 0)

    def _stratum(self, t):
        c = self.config
        return self._stratum_at(t, c.p, c.n, c.r, self.fast_cap)

    def _global_sha(self, t):
        c = self.config
        parts, diag = [], np.zeros(4, dtype=np.int64)
        primes = len(c.prime_set)
        for j, ell in enumerate(c.prime_set):
            T, d = self._stratum_at(t * primes + j, ell, c.stratum_size(), c.r, self.prime_caps[ell])
            diag += d
            if T:
                parts.append((ell, T))
        return tuple(parts), tuple(int(x) for x in diag)

    def _rst(self, t):
        c = self.config

        def call(k, rng, cap, final):
            exps, Ecur, status = k.rst_trial(rng, c.n, c.p, c.E, cap)
            return status, (exps, Ecur)

        status, (exps, Ecur), wide = self.escalate(t, c.p, self.fast_cap, call)
        esc = int(Ecur > c.E)
        free = sum(1 for e in exps if e >= Ecur)
        if status != 0:
            return None, (esc, wide, 0, int(free >= 2))
        T = Partition(int(e) for e in exps if 0 < e < Ecur)
        return (free, T), (esc, wide, 0, 0)

    def _moment(self, t):
        c = self.config
        p, e = prime_power(c.q)
        k = _backend.for_precision(p, e)
        exps = k.intersection_trial(trial_rng(c.master_seed, t), c.n, p, e)
        return Partition(int(x) for x in exps if x > 0), (0, 0, 0, 0)

    def _kernel_dim(self, t):
        c = self.config
        k = _backend.for_precision(c.p, 1)
        return int(k.kernel_dim_trial(trial_rng(c.master_seed, t), c.n, c.p)), (0, 0, 0, 0)

    def _pairing_match(self, t):
        c = self.config
        cls = self.pairing
        k = _backend.for_precision(c.p, c.E)
        hit = k.pairing_match_trial(
            trial_rng(c.master_seed, t), cls.n, c.p, c.E, cls.D, cls.U, cls.V, cls.thresholds, cls.rank_D
        )
        return ("match" if hit else "no_match"), (0, 0, 0, 0)

    def _uniformity(self, t):
        c = self.config
        k = _backend.for_precision(c.p, c.E)
        B = k.ogr_canonical_trial(trial_rng(c.master_seed, t), c.n, c.p, c.E)
        return tuple(int(x) for x in B.ravel()), (0, 0, 0, 0)


def _run_chunk(trials: _Trials, start: int, stop: int):
    return [trials.trial(t) for t in range(start, stop)]


def simulate(config: ExperimentConfig, threads: int = 1) -> EmpiricalDist:
    """Run the trials of ``config`` and return the merged histogram."""
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    runner = _Trials(config)
    runner.kernels()
    total = config.trials
    chunk = max(1, min(4096, math.ceil(total / (8 * threads))))
    bounds = [(s, min(s + chunk, total)) for s in range(0, total, chunk)]
    if threads == 1:
        results = [_run_chunk(runner, s, e) for s, e in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: _run_chunk(runner, *b), bounds))
    counts: dict = {}
    unresolved = 0
    diag = np.zeros(len(_Trials.DIAG), dtype=np.int64)
    for part in results:
        for key, d in part:
            diag += d
            if key is None:
                unresolved += 1
            else:
                counts[key] = counts.get(key, 0) + 1
    counts = {k: counts[k] for k in sorted(counts, key=lambda k: _sort_key(config.kind, k))}
    diagnostics = {name: int(v) for name, v in zip(_Trials.DIAG, diag)}
    return EmpiricalDist(config.kind, counts, total, unresolved, config.master_seed, diagnostics)


# ---------------------------------------------------------------- comparison


def _exact_text(x) -> str | None:
    return f"{x.numerator}/{x.denominator}" if isinstance(x, Fraction) else None


def _class_rows(dist: EmpiricalDist, theory_probs: dict, limits: dict | None = None) -> list[ClassRow]:
    """One row per observed class and per class with expected count >= 1."""
    total = dist.resolved
    keys = set(dist.counts)
    keys |= {k for k, v in theory_probs.items() if total * float(v) >= 1}
    rows = []
    for key in sorted(keys, key=lambda k: _sort_key(dist.kind, k)):
        count = dist.counts.get(key, 0)
        prob = theory_probs.get(key)
        rows.append(
            ClassRow(
                label=class_label(dist.kind, key),
                count=count,
                empirical=count / total if total else 0.0,
                theory=None if prob is None else float(prob),
                theory_exact=_exact_text(prob),
                z_score=None if prob is None else z_score(count, total, float(prob)),
                limit=None if limits is None or key not in limits else float(limits[key]),
            )
        )
    return rows


def _z_check(name: str, z: float) -> Check:
    return Check(name, float(z), 0.0, Z_LIMIT, bool(abs(z) <= Z_LIMIT))


def _distribution_checks(dist, theory_probs, stats) -> tuple[ChiSquare | None, list[Check]]:
    checks = []
    total = dist.resolved
    try:
        chi = chi_square(dist.counts, theory_probs)
    except DegenerateBuckets:
        chi = None
    if chi is not None:
        checks.append(Check("chi_square_p_value", chi.p_value, P_VALUE_FLOOR, 0.0, chi.p_value > P_VALUE_FLOOR))
    zs = [
        abs(z_score(dist.counts.get(k, 0), total, float(v)))
        for k, v in theory_probs.items()
        if total * float(v) >= Z_MIN_EXPECTED
    ]
    if zs:
        checks.append(Check("max_abs_z", max(zs), 0.0, Z_LIMIT, max(zs) <= Z_LIMIT))
    stats["classes_z_tested"] = len(zs)
    return chi, checks


def _unlisted(theory_probs: dict) -> float:
    return max(0.0, 1.0 - float(sum(theory_probs.values())))


def compare(config: ExperimentConfig, dist: EmpiricalDist) -> ComparisonReport:
    """Compare a histogram with the matching theoretical law."""
    c = config
    kind = c.kind
    stats: dict = {"resolved": dist.resolved, "unresolved": dist.unresolved_count}
    stats.update(dist.diagnostics)
    checks: list[Check] = []
    chi, tv, tail = None, None, 0.0
    theory_name = None
    total = dist.resolved

    if kind in ("coker", "coker_exhaustive", "stratum", "igusa"):
        r = c.r if kind == "stratum" else 0
        exact, limits = partition_law(c.p, c.n, r, finite=True, extra=dist.counts)
        theory_name = "stratum_finite" if kind == "stratum" else "pi_finite"
        rows = _class_rows(dist, exact, limits)
        tail = _unlisted(exact)
        tv = tv_to_truncated(dist.counts, exact) if total else None
        chi, checks = _distribution_checks(dist, exact, stats)
        stats["tv_to_limit"] = tv_to_truncated(dist.counts, limits) if total else None
        if kind == "igusa":
            target = theory.igusa(c.n, c.s, c.p)
            second = theory.igusa(c.n, 2 * c.s, c.p)
            mean = sum(cnt * Fraction(1, c.p ** (c.s * sum(k))) for k, cnt in dist.counts.items()) / total
            se = math.sqrt(float(second - target**2) / total)
            z = (float(mean) - float(target)) / se if se else 0.0
            stats.update(igusa_mean=float(mean), igusa_theory=float(target), igusa_theory_exact=_exact_text(target), igusa_se=se)
            theory_name = "igusa"
            checks = [_z_check("igusa_mean_z", z)]
        if kind == "stratum":
            stats["boundary_events"] = dist.diagnostics.get("boundary_events", 0)

    elif kind == "rst":
        theory_name = "rank_split"
        r0 = sum(cnt for (r, _), cnt in dist.counts.items() if r == 0)
        z = z_score(r0, total, 0.5)
        stats.update(prob_rank0=r0 / total if total else None, z_rank0=z)
        checks.append(_z_check("prob_rank0_z", z))
        checks.append(Check("rank_ge_2_after_escalation", dist.diagnostics.get("rank_ge_2", 0), 0, 0, dist.diagnostics.get("rank_ge_2", 0) == 0))
        limits = {}
        for rank in (0, 1):
            cond = {T: cnt for (r, T), cnt in dist.counts.items() if r == rank}
            law = partition_law(c.p, rank, rank, finite=False, extra=cond)[1]
            limits.update({(rank, T): 0.5 * v for T, v in law.items()})
            if cond:
                stats[f"tv_T_given_r{rank}_to_limit"] = tv_to_truncated(cond, law)
        rows = _class_rows(dist, {}, limits)
        tail = _unlisted(limits)

    elif kind == "moment":
        theory_name = "moment_finite"
        values = {k: theory.injection_count(k, c.m, c.q) for k in dist.counts}
        mean = sum(values[k] * cnt for k, cnt in dist.counts.items()) / total
        var = sum(cnt * (values[k] - mean) ** 2 for k, cnt in dist.counts.items()) / max(total - 1, 1)
        se = math.sqrt(var / total)
        target = theory.moment_finite(c.m, c.n, c.q)
        limit = theory.moment_limit(c.m, c.q)
        z = (mean - float(target)) / se if se else (0.0 if mean == float(target) else math.inf)
        stats.update(
            moment_mean=mean,
            moment_se=se,
            moment_theory=float(target),
            moment_theory_exact=_exact_text(target),
            moment_limit=limit,
            rel_dev_limit=abs(mean - limit) / limit,
        )
        checks.append(_z_check("moment_mean_z", z))
        rows = _class_rows(dist, {})

    elif kind == "pairing_match":
        theory_name = "prob_same_pairing"
        target = theory.prob_same_pairing(c.e_list, 2 * len(c.e_list), c.p)
        theory_probs = {"match": target, "no_match": 1 - target}
        rows = _class_rows(dist, theory_probs)
        z = z_score(dist.counts.get("match", 0), total, float(target))
        stats.update(prob_match=dist.counts.get("match", 0) / total, prob_match_theory=float(target))
        checks.append(_z_check("prob_match_z", z))

    elif kind == "global_sha":
        theory_name = "stratum_finite"
        n = c.stratum_size()
        per_prime = {}
        for ell in c.prime_set:
            finite = 1 - theory.stratum_finite(theory.SymplecticType(ell, ()), n, c.r)
            hits = sum(cnt for key, cnt in dist.counts.items() if any(q == ell for q, _ in key))
            z = z_score(hits, total, float(finite))
            per_prime[str(ell)] = {
                "prob_nonzero": hits / total,
                "theory_finite": float(finite),
                "theory_limit": theory.prob_nonzero_T(c.r, ell),
                "z": z,
            }
            checks.append(_z_check(f"prob_nonzero_T_p{ell}_z", z))
        stats["per_prime"] = per_prime
        stats["stratum_size"] = n
        stats["finite_fraction"] = 1.0 if total else None
        theory_probs = {}
        for key in dist.counts:
            found = dict(key)
            prob = Fraction(1)
            for ell in c.prime_set:
                prob *= theory.stratum_finite(theory.SymplecticType(ell, found.get(ell, ())), n, c.r)
            theory_probs[key] = prob
        rows = _class_rows(dist, theory_probs)
        tail = _unlisted(theory_probs)

    elif kind == "kernel_dim":
        theory_name = "alt_rank_count"
        size = c.p ** (c.n * (c.n - 1) // 2)
        theory_probs = {}
        for rank in range(c.n, -1, -2):
            count = theory.alt_rank_count(c.n, rank, c.p)
            if count:
                theory_probs[c.n - rank] = Fraction(count, size)
        rows = _class_rows(dist, theory_probs)
        tv = tv_distance(dist, theory_probs) if total else None
        chi, checks = _distribution_checks(dist, theory_probs, stats)
        half = sum(cnt for d, cnt in dist.counts.items() if 2 * d >= c.n)
        target = theory.prob_kernel_at_least_half(c.n, c.p)
        z = z_score(half, total, float(target))
        stats.update(prob_kernel_at_least_half=half / total, prob_kernel_at_least_half_theory=float(target))
        checks.append(_z_check("kernel_at_least_half_z", z))

    elif kind == "uniformity":
        theory_name = "uniform_on_enumeration"
        points = enumerate_ogr(c.n, c.p**c.E)
        expected = theory.ogr_count(c.n, c.p**c.E)
        if len(points) != expected:
            raise InternalInconsistency(f"enumeration found {len(points)} summands, formula says {expected}")
        prob = Fraction(1, expected)
        theory_probs = {tuple(int(x) for x in Z.basis.ravel()): prob for Z in points}
        rows = _class_rows(dist, theory_probs)
        tv = tv_distance(dist, theory_probs) if total else None
        chi, checks = _distribution_checks(dist, theory_probs, stats)
        outside = sum(cnt for k, cnt in dist.counts.items() if k not in theory_probs)
        stats["outside_enumeration"] = outside
        checks.append(Check("samples_outside_enumeration", outside, 0, 0, outside == 0))

    else:
        raise ConfigError(f"unknown kind {kind!r}")

    return ComparisonReport(kind, theory_name, rows, chi, tv, tail, stats, checks)


def run(config: ExperimentConfig, threads: int = 1) -> tuple[EmpiricalDist, ComparisonReport]:
    dist = simulate(config, threads)
    return dist, compare(config, dist)


# ---------------------------------------------------------------- convergence


@dataclass
class SweepPoint:
    n: int
    tv: float
    tv_se: float
    resolved: int


def convergence_sweep(kind: str, n_list, threads: int = 1, **params) -> list[SweepPoint]:
    """TV distance to the limit law at each size in ``n_list``.

    ``coker`` and ``stratum`` compare the torsion of coker A with the limit
    for corank ``r``; ``rst`` compares T given rank ``r``.
    """
    if kind not in SWEEP_KINDS:
        raise ConfigError(f"convergence_sweep supports {', '.join(SWEEP_KINDS)}, not {kind!r}")
    out = []
    for n in n_list:
        config = ExperimentConfig(kind=kind, n=n, **params)
        dist = simulate(config, threads)
        if kind == "rst":
            counts = {T: cnt for (r, T), cnt in dist.counts.items() if r == config.r}
        else:
            counts = dict(dist.counts)
        law = partition_law(config.p, config.r, config.r, finite=False, extra=counts)[1]
        tv = tv_to_truncated(counts, law)
        se = bootstrap_tv_se(counts, law, seed=config.master_seed)
        out.append(SweepPoint(n, tv, se, sum(counts.values())))
    return out


def nonincreasing_within(points: list[SweepPoint], sigmas: float = 2.0) -> bool:
    """Each TV is at most the previous one plus ``sigmas`` combined standard errors."""
    return all(
        b.tv <= a.tv + sigmas * math.hypot(a.tv_se, b.tv_se) for a, b in zip(points, points[1:])
    )


# ---------------------------------------------------------------- serialization


def report_dict(config: ExperimentConfig, dist: EmpiricalDist, report: ComparisonReport, runtime: float | None = None) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "seed": config.master_seed,
        "distribution": {
            "trials": dist.trials,
            "unresolved": dist.unresolved_count,
            "counts": {class_label(dist.kind, k): v for k, v in dist.counts.items()},
            "diagnostics": dict(dist.diagnostics),
        },
        "theory": report.theory_name,
        "classes": [asdict(r) for r in report.rows],
        "statistics": {
            "chi_square": None if report.chi_square is None else asdict(report.chi_square),
            "tv_distance": report.tv_distance,
            "tail_mass_bucketed": report.tail_mass_bucketed,
            **report.statistics,
        },
        "checks": [asdict(c) for c in report.checks],
        "passed": report.passed,
    }
    if runtime is not None:
        out["runtime_seconds"] = runtime
    return out


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def _json_restore(obj):
    if isinstance(obj, str) and obj in ("inf", "-inf", "nan"):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _json_restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_restore(v) for v in obj]
    return obj


def report_to_json(config, dist, report, runtime: float | None = None) -> str:
    return json.dumps(_json_safe(report_dict(config, dist, report, runtime)), indent=2, ensure_ascii=False) + "\n"


def report_from_json(text: str) -> tuple[ExperimentConfig, EmpiricalDist, ComparisonReport]:
    """Rebuild the structures a JSON report was written from."""
    data = _json_restore(json.loads(text))
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    config = ExperimentConfig.from_dict(data["config"])
    kind = config.kind
    d = data["distribution"]
    counts = {parse_class_label(kind, label): v for label, v in d["counts"].items()}
    dist = EmpiricalDist(kind, counts, d["trials"], d["unresolved"], data["seed"], d.get("diagnostics", {}))
    stats = dict(data["statistics"])
    chi = stats.pop("chi_square")
    tv = stats.pop("tv_distance")
    tail = stats.pop("tail_mass_bucketed")
    report = ComparisonReport(
        kind,
        data["theory"],
        [ClassRow(**row) for row in data["classes"]],
        None if chi is None else ChiSquare(**chi),
        tv,
        tail,
        stats,
        [Check(**c) for c in data["checks"]],
    )
    return config, dist, report


CSV_COLUMNS = ("label", "count", "empirical", "theory", "theory_exact", "z_score", "limit")


def report_to_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        writer.writerow(["" if getattr(row, col) is None else getattr(row, col) for col in CSV_COLUMNS])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ClassRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        def num(key, cast=float):
            return None if rec[key] == "" else cast(rec[key])

        rows.append(
            ClassRow(
                label=rec["label"],
                count=int(rec["count"]),
                empirical=float(rec["empirical"]),
                theory=num("theory"),
                theory_exact=rec["theory_exact"] or None,
                z_score=num("z_score"),
                limit=num("limit"),
            )
        )
    return rows


def timed_run(config: ExperimentConfig, threads: int = 1):
    start = time.perf_counter()
    dist, report = run(config, threads)
    return dist, report, time.perf_counter() - start
