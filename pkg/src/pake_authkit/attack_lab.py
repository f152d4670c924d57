"""Effort estimation for partial-preimage attacks on fingerprint checks.

Model: a fingerprint of b bits where a careless verifier reliably checks the
r leftmost and r rightmost bits plus u of the l middle bits. A forged key
fools such a verifier when its fingerprint matches the target exactly on the
boundary and differs in at least one and at most t = l - u of the middle
positions. The per-candidate miss probability is

    q = (2^b - sum_{k=1..t} C(l, k)) / 2^b

kept as an exact rational, and the expected effort for success probability
p is e = log_q(1 - p). Since 1 - q is on the order of 2^-32..2^-39 for
realistic parameters, the logarithms are evaluated with mpmath well above
double precision.

Two independent enumeration oracles cross-check the closed form on small b:
`oracle_enumerate` counts the Hamming-ball predicate above (matches the
closed form exactly), and `oracle_enumerate_masked` counts the strings a
verifier checking one *specific* set of u middle positions would miss
(2^t - 1, independent of which positions are chosen).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .errors import UsageError

ORACLE_MAX_BITS = 24
WORK_DPS = 80   # ~265-bit mantissa


@dataclass(frozen=True)
class AttackParams:
    """Fingerprint length b = 2*r + l, with u of the l middle bits checked."""

    b: int
    r: int
    l: int
    u: int

    def __post_init__(self):
        if min(self.b, self.r, self.l, self.u) < 0:
            raise UsageError("attack parameters must be non-negative")
        if self.b != 2 * self.r + self.l:
            raise UsageError(f"inconsistent partition: b={self.b} != 2*{self.r}+{self.l}")
        if self.u > self.l:
            raise UsageError(f"checked middle bits u={self.u} exceed middle l={self.l}")

    @property
    def t(self) -> int:
        """Maximum number of middle bits an attacker may flip undetected."""
        return self.l - self.u

    @classmethod
    def from_checked(cls, b: int, r: int, u: int) -> "AttackParams":
        if b < 2 * r:
            raise UsageError(f"boundary 2*{r} exceeds fingerprint length {b}")
        return cls(b, r, b - 2 * r, u)


@dataclass(frozen=True)
class AttackEstimate:
    """q exact; e and log2_e as floats (inf when the attack is infeasible)."""

    params: AttackParams
    q: Fraction
    valid_count: int
    p_target: float
    e: float
    log2_e: float

    @property
    def feasible(self) -> bool:
        return self.valid_count > 0

    @property
    def miss_exponent(self) -> float | None:
        """x such that q = 1 - 2^x, or None when q = 1."""
        if not self.valid_count:
            return None
        return math.log2(self.valid_count) - self.params.b


def count_partial_preimages(params: AttackParams) -> int:
    """Number of fooled-verifier strings per target: sum_{k=1..t} C(l, k)."""
    return sum(math.comb(params.l, k) for k in range(1, params.t + 1))


def q_no_preimage(params: AttackParams) -> Fraction:
    """Exact probability that one uniform candidate is not a partial preimage."""
    total = 1 << params.b
    return Fraction(total - count_partial_preimages(params), total)


def attack_effort(params: AttackParams, p_target: float = 0.5) -> AttackEstimate:
    """Attempts needed to find a partial preimage with probability >= p_target.

    Returns an infeasible estimate (e = inf) when no bit may be flipped
    undetected (u = l), rather than raising.
    """
    if not 0.0 < p_target < 1.0:
        raise UsageError("p_target must be in (0, 1)")
    valid = count_partial_preimages(params)
    q = q_no_preimage(params)
    if valid == 0:
        return AttackEstimate(params, q, 0, p_target, math.inf, math.inf)
    with mpmath.workdps(WORK_DPS):
        eps = mpmath.mpf(valid) / mpmath.power(2, params.b)
        ln_q = mpmath.log1p(-eps)
        e = mpmath.log(1 - mpmath.mpf(p_target)) / ln_q
        log2_e = mpmath.log(e, 2)
        e_f = float(e) if e < mpmath.mpf(2) ** 1020 else math.inf
        return AttackEstimate(params, q, valid, p_target, e_f, float(log2_e))


def _masks(params: AttackParams) -> tuple[int, int]:
    """(boundary mask, middle mask) with bit b-1 the leftmost bit."""
    full = (1 << params.b) - 1
    middle = ((1 << params.l) - 1) << params.r
    return full ^ middle, middle


def _check_oracle_size(params: AttackParams):
    if params.b > ORACLE_MAX_BITS:
        raise UsageError(f"enumeration oracle limited to b <= {ORACLE_MAX_BITS}")


def oracle_enumerate(params: AttackParams, target: int) -> int:
    """Exhaustively count partial preimages of `target` over all 2^b strings.

    Predicate: boundary bits match exactly, middle Hamming distance in
    [1, t]. Independent of the closed form in count_partial_preimages, and
    must agree with it for every partition.
    """
    _check_oracle_size(params)
    boundary, middle = _masks(params)
    t = params.t
    count = 0
    for cand in range(1 << params.b):
        d = cand ^ target
        if d & boundary:
            continue
        w = (d & middle).bit_count()
        if 1 <= w <= t:
            count += 1
    return count


def oracle_enumerate_masked(params: AttackParams, target: int,
                            checked_positions) -> int:
    """Count the strings undetected by a verifier checking specific positions.

    `checked_positions` are u offsets into the middle block (0 = rightmost
    middle bit). Counts candidates matching target on boundary plus those
    positions and differing somewhere else: 2^t - 1 for every choice of
    positions, which is why the closed form never needs the positions.
    """
    _check_oracle_size(params)
    positions = sorted(set(checked_positions))
    if len(positions) != params.u:
        raise UsageError(f"need exactly u={params.u} distinct checked positions")
    if positions and not 0 <= positions[0] <= positions[-1] < params.l:
        raise UsageError("checked positions must lie inside the middle block")
    boundary, _ = _masks(params)
    checked = boundary
    for pos in positions:
        checked |= 1 << (params.r + pos)
    count = 0
    for cand in range(1 << params.b):
        d = cand ^ target
        if d and not d & checked:
            count += 1
    return count


def simulate_lazy_attack(params: AttackParams, attempts: int, rng,
                         trials: int = 10000, target: int | None = None) -> float:
    """Monte-Carlo success rate of `attempts` uniform candidates per trial.

    Converges on 1 - q^attempts. `rng` needs getrandbits().
    """
    _check_oracle_size(params)
    if attempts < 0 or trials <= 0:
        raise UsageError("attempts must be >= 0 and trials positive")
    if target is None:
        target = rng.getrandbits(params.b)
    boundary, middle = _masks(params)
    t = params.t
    b = params.b
    hits = 0
    for _ in range(trials):
        for _ in range(attempts):
            d = rng.getrandbits(b) ^ target
            if d & boundary:
                continue
            w = (d & middle).bit_count()
            if 1 <= w <= t:
                hits += 1
                break
    return hits / trials
