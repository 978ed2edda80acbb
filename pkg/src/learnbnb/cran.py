"""Cloud-RAN network power minimization as a binary mixed-integer SOCP family.

An instance couples L on/off remote radio heads (RRHs) to K single-antenna
users through complex downlink channels. Switching RRH l on costs its
fronthaul power `pc[l]`; transmitting costs amplifier power `||w||^2 / eta`.
Per-user SINR targets and per-RRH power caps are second-order cone
constraints, so every node relaxation is an SOCP.

Also provides the two deflation baselines (relaxation-guided and group-sparse)
and the exhaustive leaf-enumeration oracle used as ground truth in tests.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, RotatedSocConstraint, SocConstraint, SolveStatus
from .problems import InfeasibleInstanceError, LeafResult, MinlpDefinition, VarBounds
from .seeding import derive_seed


@dataclass(frozen=True)
class CranConfig:
    """Deployment and physical-layer parameters of the instance distribution."""

    rrh_count: int = 6
    user_count: int = 4
    antennas_per_rrh: int = 2
    max_power_w: float = 1.0
    fronthaul_base_w: float = 5.0
    amplifier_efficiency: float = 0.25
    target_sinr_db: float = 4.0
    noise_dbm: float = -102.0
    half_width_m: float = 1000.0
    min_distance_m: float = 10.0
    pathloss_fixed_db: float = 148.1
    pathloss_slope_db: float = 37.6
    shadowing_std_db: float = 8.0
    antenna_gain_dbi: float = 9.0

    def __post_init__(self) -> None:
        if self.rrh_count < 1 or self.user_count < 1 or self.antennas_per_rrh < 1:
            raise ValueError("counts must be positive")
        if self.max_power_w <= 0 or self.amplifier_efficiency <= 0:
            raise ValueError("powers and efficiency must be positive")

    @property
    def target_sinr(self) -> float:
        return 10.0 ** (self.target_sinr_db / 10.0)

    @property
    def noise_w(self) -> float:
        return 10.0 ** ((self.noise_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class CranInstance(MinlpDefinition):
    """One network realization: channels, powers, and SINR targets."""

    config: CranConfig
    rrh_positions: np.ndarray
    user_positions: np.ndarray
    channel: np.ndarray  # complex, shape (K, N) with N = L * antennas_per_rrh
    pc: np.ndarray  # fronthaul power per RRH, watts
    _digest: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.channel.view(float))):
            raise ValueError("channel entries must be finite")
        if self.channel.shape != (self.config.user_count, self.total_antennas):
            raise ValueError("channel shape inconsistent with config")
        if not self._digest:
            object.__setattr__(self, "_digest", self._compute_digest())

    # -- geometry helpers -------------------------------------------------

    @property
    def L(self) -> int:
        return self.config.rrh_count

    @property
    def K(self) -> int:
        return self.config.user_count

    @property
    def total_antennas(self) -> int:
        return self.config.rrh_count * self.config.antennas_per_rrh

    def antenna_slice(self, l: int) -> slice:
        n = self.config.antennas_per_rrh
        return slice(l * n, (l + 1) * n)

    def _compute_digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.config).encode())
        for arr in (self.rrh_positions, self.user_positions, self.pc):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        h.update(np.ascontiguousarray(self.channel, dtype=complex).tobytes())
        return h.hexdigest()[:16]

    # -- MinlpDefinition contract -----------------------------------------

    @property
    def integer_count(self) -> int:
        return self.L

    @property
    def instance_id(self) -> str:
        return self._digest

    def relax(self, bounds: VarBounds) -> ConicProgram:
        return build_node_relaxation(self, bounds)

    def integer_values(self, x: np.ndarray) -> np.ndarray:
        kn = 2 * self.K * self.total_antennas
        return x[kn + self.L : kn + 2 * self.L]

    def beamformer_from_primal(self, x: np.ndarray) -> np.ndarray:
        """Reassemble the complex (K, N) beamforming matrix from a primal vector."""
        kn = self.K * self.total_antennas
        return (x[:kn] + 1j * x[kn : 2 * kn]).reshape(self.K, self.total_antennas)

    def leaf_evaluate(self, assignment: tuple[int, ...]) -> LeafResult:
        sol = self.solve_relaxation(VarBounds.fixed(tuple(int(v) for v in assignment)))
        if sol.status is SolveStatus.OPTIMAL:
            return LeafResult(sol.status, sol.objective, sol.x)
        return LeafResult(sol.status, sol.objective, None)

    def leaf_lower_bound(self, assignment: tuple[int, ...]) -> float:
        # transmit power is nonnegative, so the fronthaul sum bounds the leaf
        return float(np.asarray(assignment, dtype=float) @ self.pc)

    @property
    def monotone_feasibility(self) -> bool:
        # power caps a_l * sqrt(P_l) only grow when an RRH switches on
        return True

    def problem_feature(self, j: int) -> np.ndarray:
        if not 0 <= j < self.L:
            raise IndexError(f"RRH index {j} out of range")
        total = float(np.sum(self.pc))
        if total == 0.0:
            raise ValueError("fronthaul powers sum to zero; feature undefined")
        return np.array([self.pc[j] * self.L / total])


def large_scale_amplitude(cfg: CranConfig, dist_m: float, shadow_db: float = 0.0) -> float:
    """Composite large-scale channel amplitude at one distance.

    Path loss `pathloss_fixed + pathloss_slope * log10(d_km)` dB, antenna
    gain, and an explicit shadowing realization in dB.
    """
    pathloss_db = cfg.pathloss_fixed_db + cfg.pathloss_slope_db * math.log10(dist_m / 1000.0)
    gain = 10.0 ** (cfg.antenna_gain_dbi / 10.0)
    return 10.0 ** (-pathloss_db / 20.0) * math.sqrt(gain * 10.0 ** (shadow_db / 10.0))


def generate_instance(cfg: CranConfig, seed: int) -> CranInstance:
    """Draw one network realization; bit-identical for identical seeds.

    RRHs and users are uniform i.i.d. in the square; each user is redrawn
    until it clears the minimum distance to every RRH, avoiding path-loss
    singularities.
    """
    rng = np.random.default_rng(seed)
    hw = cfg.half_width_m
    rrh_pos = rng.uniform(-hw, hw, size=(cfg.rrh_count, 2))
    users = []
    for _ in range(cfg.user_count):
        while True:
            p = rng.uniform(-hw, hw, size=2)
            if np.min(np.linalg.norm(rrh_pos - p, axis=1)) >= cfg.min_distance_m:
                users.append(p)
                break
    user_pos = np.asarray(users)

    K, L, n_ant = cfg.user_count, cfg.rrh_count, cfg.antennas_per_rrh
    dist = np.linalg.norm(user_pos[:, None, :] - rrh_pos[None, :, :], axis=2)
    pathloss_db = cfg.pathloss_fixed_db + cfg.pathloss_slope_db * np.log10(dist / 1000.0)
    shadow_db = rng.normal(0.0, cfg.shadowing_std_db, size=(K, L))
    gain = 10.0 ** (cfg.antenna_gain_dbi / 10.0)
    # Large-scale amplitude per user-RRH pair.
    amp = 10.0 ** (-pathloss_db / 20.0) * np.sqrt(gain * 10.0 ** (shadow_db / 10.0))
    small = (
        rng.standard_normal((K, L, n_ant)) + 1j * rng.standard_normal((K, L, n_ant))
    ) / math.sqrt(2.0)
    h = (amp[:, :, None] * small).reshape(K, L * n_ant)

    pc = rng.permutation(cfg.fronthaul_base_w + np.arange(1, L + 1, dtype=float))
    return CranInstance(
        config=cfg, rrh_positions=rrh_pos, user_positions=user_pos, channel=h, pc=pc
    )


def generate_feasible_instance(
    cfg: CranConfig, seed: int, max_tries: int = 100
) -> CranInstance:
    """Draw instances until the all-on assignment is feasible.

    All-on is the least constrained leaf, so its feasibility is equivalent
    to the instance admitting any feasible assignment.
    """
    for attempt in range(max_tries):
        inst = generate_instance(cfg, derive_seed(seed, "draw", attempt))
        leaf = inst.leaf_evaluate((1,) * cfg.rrh_count)
        if leaf.feasible:
            return inst
    raise InfeasibleInstanceError(
        f"no feasible realization in {max_tries} draws for seed {seed}"
    )


def build_node_relaxation(inst: CranInstance, bounds: VarBounds) -> ConicProgram:
    """SOCP relaxation of a node: box-relaxed on/off variables, epigraph transmit power.

    Variable layout: [Re(w) (K*N), Im(w) (K*N), s (L), a (L)] where s_l is the
    epigraph of RRH l's transmit power. SINR cones are normalized by each
    user's noise amplitude so all data is O(1) for the interior-point solver.
    """
    if bounds.n_vars != inst.L:
        raise ValueError("bounds length must equal the RRH count")
    cfg = inst.config
    K, L, N = inst.K, inst.L, inst.total_antennas
    kn = K * N
    n_vars = 2 * kn + 2 * L
    sigma = math.sqrt(cfg.noise_w)
    gamma = cfg.target_sinr

    soc: list[SocConstraint] = []
    rsoc: list[RotatedSocConstraint] = []

    # Per-user SINR cone: || interference, 1 || <= Re(u_k^H w_k) / sqrt(gamma),
    # with u_k = h_k / sigma.
    for k in range(K):
        u = inst.channel[k] / sigma
        F = np.zeros((2 * (K - 1) + 1, n_vars))
        g = np.zeros(2 * (K - 1) + 1)
        row = 0
        for i in range(K):
            if i == k:
                continue
            F[row, i * N : (i + 1) * N] = u.real
            F[row, kn + i * N : kn + (i + 1) * N] = u.imag
            F[row + 1, i * N : (i + 1) * N] = -u.imag
            F[row + 1, kn + i * N : kn + (i + 1) * N] = u.real
            row += 2
        g[row] = 1.0  # normalized noise
        e = np.zeros(n_vars)
        e[k * N : (k + 1) * N] = u.real / math.sqrt(gamma)
        e[kn + k * N : kn + (k + 1) * N] = u.imag / math.sqrt(gamma)
        soc.append(SocConstraint(F=F, g=g, e=e, d=0.0))

    # Per-RRH power cap || w restricted to RRH l || <= a_l * sqrt(P_l),
    # plus the rotated-cone epigraph s_l >= same squared norm.
    for l in range(L):
        sel = inst.antenna_slice(l)
        F = np.zeros((2 * K * cfg.antennas_per_rrh, n_vars))
        row = 0
        for k in range(K):
            for i in range(sel.start, sel.stop):
                F[row, k * N + i] = 1.0
                F[row + 1, kn + k * N + i] = 1.0
                row += 2
        e = np.zeros(n_vars)
        e[2 * kn + L + l] = math.sqrt(cfg.max_power_w)
        soc.append(SocConstraint(F=F, g=np.zeros(F.shape[0]), e=e, d=0.0))
        p = np.zeros(n_vars)
        p[2 * kn + l] = 1.0
        rsoc.append(
            RotatedSocConstraint(
                F=F, g=np.zeros(F.shape[0]), p=p, q=0.0, r=np.zeros(n_vars), s=1.0
            )
        )

    objective = np.zeros(n_vars)
    objective[2 * kn : 2 * kn + L] = 1.0 / cfg.amplifier_efficiency
    objective[2 * kn + L :] = inst.pc

    lb = np.full(n_vars, -np.inf)
    ub = np.full(n_vars, np.inf)
    lb[2 * kn : 2 * kn + L] = 0.0  # transmit-power epigraphs
    lb[2 * kn + L :] = np.asarray(bounds.lb, dtype=float)
    ub[2 * kn + L :] = np.asarray(bounds.ub, dtype=float)

    return ConicProgram(
        n_vars=n_vars,
        objective=objective,
        soc=tuple(soc),
        rsoc=tuple(rsoc),
        lb=lb,
        ub=ub,
    )


def network_power(inst: CranInstance, assignment, w: np.ndarray) -> float:
    """Objective of a complete solution: fronthaul power of active RRHs plus amplifier power."""
    a = np.asarray(assignment, dtype=float)
    total = float(a @ inst.pc)
    for l in range(inst.L):
        group = w[:, inst.antenna_slice(l)]
        total += float(np.sum(np.abs(group) ** 2)) / inst.config.amplifier_efficiency
    return total


def verify_assignment(inst: CranInstance, assignment, w: np.ndarray) -> dict[str, float]:
    """Relative constraint violations of a complete solution, by direct substitution."""
    cfg = inst.config
    gamma, sigma2 = cfg.target_sinr, cfg.noise_w
    sinr_viol = 0.0
    for k in range(inst.K):
        gains = np.abs(inst.channel[k].conj() @ w.T) ** 2
        signal = gains[k]
        interference = float(np.sum(gains)) - signal + sigma2
        achieved = signal / interference
        sinr_viol = max(sinr_viol, (gamma - achieved) / gamma)
    power_viol = 0.0
    for l in range(inst.L):
        used = float(np.sum(np.abs(w[:, inst.antenna_slice(l)]) ** 2))
        cap = float(assignment[l]) * cfg.max_power_w
        power_viol = max(power_viol, (used - cap) / cfg.max_power_w)
    return {"sinr": max(sinr_viol, 0.0), "power": max(power_viol, 0.0)}


@dataclass(frozen=True)
class BaselineResult:
    assignment: tuple[int, ...]
    w: np.ndarray
    objective: float
    conic_solves: int


def rminlp(inst: CranInstance) -> BaselineResult:
    """Relaxation-guided deflation: switch off RRHs in ascending relaxed a_l order.

    Deflation stops at the first infeasible relaxation; the last feasible
    active set is evaluated as a leaf. Uses at most 3L conic solves.
    """
    solves = 1
    root = inst.solve_relaxation(inst.root_bounds())
    if root.status is SolveStatus.INFEASIBLE:
        raise InfeasibleInstanceError("root relaxation infeasible")
    if root.status is not SolveStatus.OPTIMAL:
        raise RuntimeError("root relaxation failed numerically")
    a_rel = inst.integer_values(root.x)
    order = np.argsort(a_rel, kind="stable")

    off: list[int] = []
    for l in order:
        trial = off + [int(l)]
        if len(trial) == inst.L:
            break
        bounds = VarBounds.binary(inst.L)
        for j in trial:
            bounds = bounds.with_bounds(j, 0, 0)
        sol = inst.solve_relaxation(bounds)
        solves += 1
        if sol.status is not SolveStatus.OPTIMAL:
            break
        off = trial

    assignment = tuple(0 if l in off else 1 for l in range(inst.L))
    leaf = inst.leaf_evaluate(assignment)
    solves += 1
    if not leaf.feasible:
        raise RuntimeError("deflation produced an infeasible final configuration")
    return BaselineResult(
        assignment=assignment,
        w=inst.beamformer_from_primal(leaf.x),
        objective=leaf.objective,
        conic_solves=solves,
    )


def gsbf_priority(inst: CranInstance, group_norms: np.ndarray) -> np.ndarray:
    """Deflation priority sqrt(pc_l / (eta_l * P_l)) * ||group beamformer||.

    Lower priority RRHs are switched off first. The ordering is invariant to
    uniform rescaling of the fronthaul powers.
    """
    cfg = inst.config
    return np.sqrt(inst.pc / (cfg.amplifier_efficiency * cfg.max_power_w)) * group_norms


def gsbf(inst: CranInstance) -> BaselineResult:
    """Group-sparse deflation: one relaxation, a priority ordering, then a
    bisection over how many low-priority RRHs to switch off.

    Priority is sqrt(pc_l / (eta_l * P_l)) times the relaxed group norm,
    ascending; the ordering criterion is a reconstruction and can be swapped.
    Uses at most L conic solves for L >= 5.
    """
    solves = 1
    root = inst.solve_relaxation(inst.root_bounds())
    if root.status is SolveStatus.INFEASIBLE:
        raise InfeasibleInstanceError("root relaxation infeasible")
    if root.status is not SolveStatus.OPTIMAL:
        raise RuntimeError("root relaxation failed numerically")
    w_rel = inst.beamformer_from_primal(root.x)
    norms = np.array(
        [np.linalg.norm(w_rel[:, inst.antenna_slice(l)]) for l in range(inst.L)]
    )
    order = np.argsort(gsbf_priority(inst, norms), kind="stable")

    cache: dict[int, LeafResult] = {}

    def leaf_for(n_off: int) -> LeafResult:
        nonlocal solves
        if n_off not in cache:
            assignment = [1] * inst.L
            for l in order[:n_off]:
                assignment[int(l)] = 0
            cache[n_off] = inst.leaf_evaluate(tuple(assignment))
            solves += 1
        return cache[n_off]

    if not leaf_for(0).feasible:
        raise InfeasibleInstanceError("all-on assignment infeasible")
    lo, hi = 0, inst.L - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if leaf_for(mid).feasible:
            lo = mid
        else:
            hi = mid - 1

    best = leaf_for(lo)
    assignment = [1] * inst.L
    for l in order[:lo]:
        assignment[int(l)] = 0
    return BaselineResult(
        assignment=tuple(assignment),
        w=inst.beamformer_from_primal(best.x),
        objective=best.objective,
        conic_solves=solves,
    )


@dataclass(frozen=True)
class OracleResult:
    assignment: tuple[int, ...]
    objective: float
    leaf_solves: int


def exhaustive_oracle(inst: CranInstance, table=None) -> OracleResult:
    """Ground truth by enumerating every on/off pattern (L <= 12)."""
    if inst.L > 12:
        raise ValueError("exhaustive enumeration is limited to L <= 12")
    from .learned import LeafTable

    if table is None:
        table = LeafTable(inst.instance_id)
    best_obj = math.inf
    best_assignment: tuple[int, ...] | None = None
    solves = 0
    for bits in itertools.product((0, 1), repeat=inst.L):
        before = table.misses
        res = table.lookup_or_solve(bits, inst)
        solves += table.misses - before
        if res.status is SolveStatus.NUMERICAL_FAILURE:
            raise RuntimeError(f"leaf solve failed for assignment {bits}")
        if res.feasible and res.objective < best_obj:
            best_obj = res.objective
            best_assignment = bits
    if best_assignment is None:
        raise InfeasibleInstanceError("every assignment is infeasible")
    return OracleResult(assignment=best_assignment, objective=best_obj, leaf_solves=solves)
