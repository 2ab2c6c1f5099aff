"""Discretization of the minimum-time speed profile into a conic program.

The path coordinate runs over [0, 1] on a uniform grid of K intervals.  The
squared path speed b(s) is piecewise linear between grid nodes and the path
acceleration a(s) is constant on each interval, tied together by the chain
rule row b^{k+1} - b^k = 2 Delta a^k.  Auxiliary variables c^k ~ sqrt(b^k)
and d^k >= 1/(c^{k+1} + c^k) turn the travel time sum(2 Delta d^k) into a
linear objective with second-order cone epigraphs.

All dynamics rows are collocated at interval midpoints, where b enters as
the average of the two surrounding node values.  Joint torques and contact
wrenches are decision variables at every midpoint; wrench components that a
contact model cannot transmit stay in the variable vector but are pinned to
zero by equality rows, which keeps the bookkeeping uniform and makes the
free-scalar count match K(4 + 3u + 4v + n) - 2 for a rest-to-rest profile
with u point contacts and v soft-finger contacts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contacts import ContactSpec
from .dynamics import Scene, stack_dynamics_in_s

STALL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform discretization of the path coordinate."""

    intervals: int
    points: np.ndarray
    midpoints: np.ndarray
    spacing: float


def build_grid(intervals: int) -> Grid:
    if intervals < 1:
        raise ValueError("grid needs at least one interval")
    pts = np.linspace(0.0, 1.0, intervals + 1)
    mids = 0.5 * (pts[:-1] + pts[1:])
    return Grid(intervals=intervals, points=pts, midpoints=mids, spacing=1.0 / intervals)


def interval_b_interpolation(b_lo: float, b_hi: float, s: float, s_lo: float = 0.0, s_hi: float = 1.0) -> float:
    """Piecewise-linear squared-speed value inside one grid interval."""
    if not (s_lo - 1e-12 <= s <= s_hi + 1e-12):
        raise ValueError(f"s={s} outside interval [{s_lo}, {s_hi}]")
    w = (s - s_lo) / (s_hi - s_lo)
    return float(b_lo + (b_hi - b_lo) * np.clip(w, 0.0, 1.0))


@dataclass(frozen=True)
class LinearRow:
    """Sparse affine expression sum(vals * x[cols]) + offset."""

    cols: tuple[int, ...]
    vals: tuple[float, ...]
    offset: float
    label: str


@dataclass(frozen=True)
class BoundRow:
    """lower <= sum(vals * x[cols]) + offset <= upper, infinities allowed."""

    cols: tuple[int, ...]
    vals: tuple[float, ...]
    offset: float
    lower: float
    upper: float
    label: str


@dataclass(frozen=True)
class ConeBlock:
    """Second-order cone: rows[0] >= norm(rows[1:])."""

    rows: tuple[LinearRow, ...]
    label: str


@dataclass(frozen=True)
class SpeedNode:
    """Grid-node speed bookkeeping; pinned nodes carry constants."""

    b_col: int | None
    c_col: int | None
    b_value: float
    c_value: float


@dataclass(frozen=True)
class ScalingVariables:
    """Solution of the speed program mapped back to named quantities."""

    accel: np.ndarray  # per interval
    speed_sq: np.ndarray  # per node, constants filled in
    speed_aux: np.ndarray  # per node
    inverse_avg: np.ndarray  # per interval
    torque: np.ndarray  # (K, n)
    wrenches: dict  # contact id -> (K, 6)


@dataclass
class ConicProgram:
    """Assembled program: linear objective, equality rows, bound rows, cones."""

    num_vars: int
    objective: np.ndarray
    equalities: list
    bounds: list
    cones: list
    pinned_idx: tuple
    slices: dict
    nodes: tuple
    grid: Grid
    contact_order: tuple
    meta: dict = field(default_factory=dict)

    def free_scalar_count(self) -> int:
        return self.num_vars - len(self.pinned_idx)

    def extract(self, x: np.ndarray) -> ScalingVariables:
        x = np.asarray(x, dtype=float).reshape(self.num_vars)
        K = self.grid.intervals
        n = self.meta["dof"]
        b = np.array([nd.b_value if nd.b_col is None else x[nd.b_col] for nd in self.nodes])
        c = np.array([nd.c_value if nd.c_col is None else x[nd.c_col] for nd in self.nodes])
        tau = x[self.slices["tau"]].reshape(K, n)
        wrenches = {cid: x[self.slices[f"F:{cid}"]].reshape(K, 6) for cid in self.contact_order}
        return ScalingVariables(
            accel=x[self.slices["a"]].copy(),
            speed_sq=b,
            speed_aux=c,
            inverse_avg=x[self.slices["d"]].copy(),
            torque=tau,
            wrenches=wrenches,
        )

    def residual_report(self, x: np.ndarray) -> dict:
        """Worst violation of each row family at the point x, keyed by label prefix."""
        x = np.asarray(x, dtype=float).reshape(self.num_vars)

        def expr(row):
            return sum(v * x[cc] for cc, v in zip(row.cols, row.vals)) + row.offset

        worst: dict[str, float] = {}

        def note(label, value):
            fam = label.split("[", 1)[0]
            worst[fam] = max(worst.get(fam, 0.0), value)

        for row in self.equalities:
            note(row.label, abs(expr(row)))
        for row in self.bounds:
            v = expr(row)
            viol = max(row.lower - v, v - row.upper, 0.0)
            note(row.label, viol)
        for blk in self.cones:
            head = expr(blk.rows[0])
            tail = math.sqrt(sum(expr(r) ** 2 for r in blk.rows[1:]))
            note(blk.label, max(tail - head, 0.0))
        return worst

    def to_json_dict(self) -> dict:
        def row_dict(row):
            return {"cols": list(row.cols), "vals": list(row.vals), "offset": row.offset, "label": row.label}

        def bound_val(v):
            return None if not np.isfinite(v) else v

        return {
            "format": "contact-topp/program-v1",
            "num_vars": self.num_vars,
            "objective": {
                "cols": np.nonzero(self.objective)[0].tolist(),
                "vals": self.objective[np.nonzero(self.objective)[0]].tolist(),
            },
            "equalities": [row_dict(r) for r in self.equalities],
            "bounds": [
                dict(row_dict(r), lower=bound_val(r.lower), upper=bound_val(r.upper)) for r in self.bounds
            ],
            "cones": [{"label": b.label, "rows": [row_dict(r) for r in b.rows]} for b in self.cones],
            "pinned": list(self.pinned_idx),
            "slices": {k: [v.start, v.stop] for k, v in self.slices.items()},
            "nodes": [
                {
                    "b_col": nd.b_col,
                    "c_col": nd.c_col,
                    "b_value": None if nd.b_col is not None else nd.b_value,
                    "c_value": None if nd.c_col is not None else nd.c_value,
                }
                for nd in self.nodes
            ],
            "grid_intervals": self.grid.intervals,
            "contact_order": list(self.contact_order),
            "meta": dict(self.meta),
        }


def program_from_json_dict(data: dict) -> ConicProgram:
    if data.get("format") != "contact-topp/program-v1":
        raise ValueError(f"unsupported program dump format {data.get('format')!r}")
    num_vars = int(data["num_vars"])
    objective = np.zeros(num_vars)
    objective[np.asarray(data["objective"]["cols"], dtype=int)] = data["objective"]["vals"]

    def row(d):
        return LinearRow(tuple(d["cols"]), tuple(d["vals"]), float(d["offset"]), d["label"])

    def bound(d):
        lo = -np.inf if d["lower"] is None else float(d["lower"])
        hi = np.inf if d["upper"] is None else float(d["upper"])
        return BoundRow(tuple(d["cols"]), tuple(d["vals"]), float(d["offset"]), lo, hi, d["label"])

    return ConicProgram(
        num_vars=num_vars,
        objective=objective,
        equalities=[row(d) for d in data["equalities"]],
        bounds=[bound(d) for d in data["bounds"]],
        cones=[ConeBlock(tuple(row(r) for r in d["rows"]), d["label"]) for d in data["cones"]],
        pinned_idx=tuple(data["pinned"]),
        slices={k: slice(v[0], v[1]) for k, v in data["slices"].items()},
        nodes=tuple(
            SpeedNode(
                d["b_col"],
                d["c_col"],
                np.nan if d["b_value"] is None else float(d["b_value"]),
                np.nan if d["c_value"] is None else float(d["c_value"]),
            )
            for d in data["nodes"]
        ),
        grid=build_grid(int(data["grid_intervals"])),
        contact_order=tuple(data["contact_order"]),
        meta=dict(data.get("meta", {})),
    )


@dataclass(frozen=True)
class TranscriptionSettings:
    """Assembly options; None boundary speeds leave that endpoint free."""

    boundary_sdot: tuple = (0.0, 0.0)
    constant_tol: float = 1e-9


def _stacked_limits(scene: Scene):
    tl, tu, vm, al, au = [], [], [], [], []
    for r in scene.robots:
        lim = r.model.limits
        tl.append(lim.torque_lower)
        tu.append(lim.torque_upper)
        vm.append(lim.velocity_max)
        al.append(lim.accel_lower)
        au.append(lim.accel_upper)
    return tuple(np.concatenate(v) for v in (tl, tu, vm, al, au))


def _contact_specs(scene: Scene) -> dict[str, ContactSpec]:
    return {f"{obj.model.name}/{c.name}": c for obj in scene.objects for c in obj.model.contacts}


def assemble(scene: Scene, grid: Grid, settings: TranscriptionSettings = TranscriptionSettings()) -> ConicProgram:
    """Build the conic program for the minimum-time profile along the path."""
    K = grid.intervals
    n = scene.dof
    samples = stack_dynamics_in_s(scene, grid.midpoints)
    contact_order = tuple(scene.contact_ids())
    specs = _contact_specs(scene)
    descriptors = {cid: specs[cid].descriptor() for cid in contact_order}
    tl, tu, vmax, al, au = _stacked_limits(scene)

    # variable layout, in declaration order
    slices: dict[str, slice] = {}
    at = 0

    def claim(name, count):
        nonlocal at
        slices[name] = slice(at, at + count)
        at += count

    claim("a", K)
    sdot0, sdotT = settings.boundary_sdot
    free_nodes = [k for k in range(K + 1) if (k != 0 or sdot0 is None) and (k != K or sdotT is None)]
    claim("b", len(free_nodes))
    claim("c", len(free_nodes))
    claim("d", K)
    claim("tau", K * n)
    for cid in contact_order:
        claim(f"F:{cid}", 6 * K)
    num_vars = at

    nodes = []
    free_pos = {k: i for i, k in enumerate(free_nodes)}
    for k in range(K + 1):
        if k in free_pos:
            nodes.append(SpeedNode(slices["b"].start + free_pos[k], slices["c"].start + free_pos[k], np.nan, np.nan))
        else:
            sd = float(sdot0 if k == 0 else sdotT)
            nodes.append(SpeedNode(None, None, sd * sd, abs(sd)))
    nodes = tuple(nodes)

    def tau_col(k, i):
        return slices["tau"].start + k * n + i

    def f_col(cid, k, m):
        return slices[f"F:{cid}"].start + 6 * k + m

    def mid_b_terms(k, coeff):
        """Columns/constant for coeff * (b^k + b^{k+1})/2."""
        cols, vals, const = [], [], 0.0
        for nd in (nodes[k], nodes[k + 1]):
            if nd.b_col is None:
                const += 0.5 * coeff * nd.b_value
            else:
                cols.append(nd.b_col)
                vals.append(0.5 * coeff)
        return cols, vals, const

    equalities: list[LinearRow] = []
    bounds: list[BoundRow] = []
    cones: list[ConeBlock] = []
    pinned: list[int] = []

    # torque-dynamics rows: tau + sum J^T F = Macc a + Mvel b_mid + grav
    for k, smp in enumerate(samples):
        for i in range(n):
            cols = [tau_col(k, i)]
            vals = [1.0]
            for cid, J in smp.contact_jacobians.items():
                for m in range(6):
                    if J[m, i] != 0.0:
                        cols.append(f_col(cid, k, m))
                        vals.append(float(J[m, i]))
            cols.append(slices["a"].start + k)
            vals.append(-float(smp.torque_accel_coeff[i]))
            bc, bv, bconst = mid_b_terms(k, -float(smp.torque_velsq_coeff[i]))
            cols += bc
            vals += bv
            offset = bconst - float(smp.torque_gravity[i])
            equalities.append(LinearRow(tuple(cols), tuple(vals), offset, f"torque[{k}][{i}]"))

    # object wrench balance: sum sign G F - A a - B b_mid + f_ext = 0
    for k, smp in enumerate(samples):
        for osmp in smp.objects:
            for r in range(6):
                cols, vals = [], []
                for cid, sign, G in osmp.contact_terms:
                    for m in range(6):
                        if G[r, m] != 0.0:
                            cols.append(f_col(cid, k, m))
                            vals.append(float(sign * G[r, m]))
                cols.append(slices["a"].start + k)
                vals.append(-float(osmp.accel_coeff[r]))
                bc, bv, bconst = mid_b_terms(k, -float(osmp.velsq_coeff[r]))
                cols += bc
                vals += bv
                offset = bconst + float(osmp.external[r])
                equalities.append(LinearRow(tuple(cols), tuple(vals), offset, f"balance[{osmp.name}][{k}][{r}]"))

    # chain-rule coupling b^{k+1} - b^k = 2 Delta a^k
    for k in range(K):
        cols, vals, offset = [], [], 0.0
        for nd, sgn in ((nodes[k + 1], 1.0), (nodes[k], -1.0)):
            if nd.b_col is None:
                offset += sgn * nd.b_value
            else:
                cols.append(nd.b_col)
                vals.append(sgn)
        cols.append(slices["a"].start + k)
        vals.append(-2.0 * grid.spacing)
        equalities.append(LinearRow(tuple(cols), tuple(vals), offset, f"coupling[{k}]"))

    # untransmittable wrench components pinned to zero
    for cid in contact_order:
        for k in range(K):
            for idx in descriptors[cid].pinned:
                col = f_col(cid, k, idx)
                pinned.append(col)
                equalities.append(LinearRow((col,), (1.0,), 0.0, f"pin[{cid}][{k}][{idx}]"))

    # torque boxes
    for k in range(K):
        for i in range(n):
            if not (np.isfinite(tl[i]) or np.isfinite(tu[i])):
                continue
            bounds.append(BoundRow((tau_col(k, i),), (1.0,), 0.0, float(tl[i]), float(tu[i]), f"torque_box[{k}][{i}]"))

    # joint velocity: (q'_i)^2 b_mid <= vmax_i^2
    for k, smp in enumerate(samples):
        for i in range(n):
            coeff = float(smp.dq[i]) ** 2
            if not np.isfinite(vmax[i]):
                continue
            cap = float(vmax[i]) ** 2
            cols, vals, const = mid_b_terms(k, coeff)
            if not cols:
                if const > cap + settings.constant_tol * max(1.0, cap):
                    raise ValueError(f"velocity limit of joint {i} violated by fixed boundary speed at interval {k}")
                continue
            bounds.append(BoundRow(tuple(cols), tuple(vals), const, -np.inf, cap, f"velocity[{k}][{i}]"))

    # joint acceleration: q''_i b_mid + q'_i a in [lo, hi]
    for k, smp in enumerate(samples):
        for i in range(n):
            if not (np.isfinite(al[i]) or np.isfinite(au[i])):
                continue
            cols, vals, const = mid_b_terms(k, float(smp.ddq[i]))
            dq = float(smp.dq[i])
            if dq != 0.0:
                cols = list(cols) + [slices["a"].start + k]
                vals = list(vals) + [dq]
            if not cols:
                if const > au[i] + settings.constant_tol or const < al[i] - settings.constant_tol:
                    raise ValueError(f"acceleration limit of joint {i} violated by constants at interval {k}")
                continue
            bounds.append(
                BoundRow(tuple(cols), tuple(vals), const, float(al[i]), float(au[i]), f"acceleration[{k}][{i}]")
            )

    # squared speed stays nonnegative at free nodes
    for k in free_nodes:
        bounds.append(BoundRow((nodes[k].b_col,), (1.0,), 0.0, 0.0, np.inf, f"speed_sq_nonneg[{k}]"))

    # normal force caps
    for cid in contact_order:
        cap = specs[cid].fz_max
        if cap is None:
            continue
        head = descriptors[cid].head_index
        for k in range(K):
            bounds.append(BoundRow((f_col(cid, k, head),), (1.0,), 0.0, -np.inf, float(cap), f"normal_cap[{cid}][{k}]"))

    # contact friction cones
    for cid in contact_order:
        desc = descriptors[cid]
        for k in range(K):
            rows = [LinearRow((f_col(cid, k, desc.head_index),), (1.0,), 0.0, f"cone_head[{cid}][{k}]")]
            for idx, w in desc.tail:
                rows.append(LinearRow((f_col(cid, k, idx),), (float(w),), 0.0, f"cone_tail[{cid}][{k}][{idx}]"))
            cones.append(ConeBlock(tuple(rows), f"cone[{cid}][{k}]"))

    # epigraph linking c^k to sqrt(b^k): norm(2c, b - 1) <= b + 1
    for k in free_nodes:
        nd = nodes[k]
        rows = (
            LinearRow((nd.b_col,), (1.0,), 1.0, f"sqrt_head[{k}]"),
            LinearRow((nd.c_col,), (2.0,), 0.0, f"sqrt_tail_c[{k}]"),
            LinearRow((nd.b_col,), (1.0,), -1.0, f"sqrt_tail_b[{k}]"),
        )
        cones.append(ConeBlock(rows, f"sqrt_epigraph[{k}]"))

    # epigraph for d >= 1/(c^{k+1} + c^k): norm(2, u - d) <= u + d
    for k in range(K):
        cc, cv, cconst = [], [], 0.0
        for nd in (nodes[k], nodes[k + 1]):
            if nd.c_col is None:
                cconst += nd.c_value
            else:
                cc.append(nd.c_col)
                cv.append(1.0)
        d_col = slices["d"].start + k
        head = LinearRow(tuple(cc + [d_col]), tuple(cv + [1.0]), cconst, f"inv_head[{k}]")
        tail_const = LinearRow((), (), 2.0, f"inv_tail_two[{k}]")
        tail_diff = LinearRow(tuple(cc + [d_col]), tuple(cv + [-1.0]), cconst, f"inv_tail_diff[{k}]")
        cones.append(ConeBlock((head, tail_const, tail_diff), f"inv_epigraph[{k}]"))

    objective = np.zeros(num_vars)
    objective[slices["d"]] = 2.0 * grid.spacing

    return ConicProgram(
        num_vars=num_vars,
        objective=objective,
        equalities=equalities,
        bounds=bounds,
        cones=cones,
        pinned_idx=tuple(pinned),
        slices=slices,
        nodes=nodes,
        grid=grid,
        contact_order=contact_order,
        meta={"dof": n, "boundary_sdot": list(settings.boundary_sdot)},
    )


@dataclass(frozen=True)
class PathTiming:
    """Closed-form time map for a piecewise-linear squared-speed profile."""

    total: float
    node_times: np.ndarray
    grid: Grid
    speed_sq: np.ndarray

    def time_of(self, s: float) -> float:
        s = float(np.clip(s, 0.0, 1.0))
        pts = self.grid.points
        k = min(int(np.searchsorted(pts, s, side="right")) - 1, self.grid.intervals - 1)
        k = max(k, 0)
        ds = s - pts[k]
        b_lo, b_hi = self.speed_sq[k], self.speed_sq[k + 1]
        slope = (b_hi - b_lo) / self.grid.spacing
        if abs(slope) < 1e-300:
            return float(self.node_times[k] + ds / math.sqrt(max(b_lo, 1e-300)))
        b_here = max(b_lo + slope * ds, 0.0)
        return float(self.node_times[k] + 2.0 * (math.sqrt(b_here) - math.sqrt(max(b_lo, 0.0))) / slope)

    def s_of(self, t: float) -> float:
        t = float(np.clip(t, 0.0, self.total))
        times = self.node_times
        k = min(int(np.searchsorted(times, t, side="right")) - 1, self.grid.intervals - 1)
        k = max(k, 0)
        dt = t - times[k]
        b_lo, b_hi = self.speed_sq[k], self.speed_sq[k + 1]
        slope = (b_hi - b_lo) / self.grid.spacing
        root_lo = math.sqrt(max(b_lo, 0.0))
        if abs(slope) < 1e-300:
            return float(self.grid.points[k] + root_lo * dt)
        root_here = max(root_lo + 0.5 * slope * dt, 0.0)
        return float(np.clip(self.grid.points[k] + (root_here**2 - b_lo) / slope, 0.0, 1.0))


def recover_time(speed_sq, grid: Grid) -> PathTiming:
    """Total travel time and the cumulative time at each grid node.

    Each interval contributes 2 Delta / (sqrt(b^{k+1}) + sqrt(b^k)); an
    interval whose both endpoint values vanish would take infinite time and
    is reported as a degenerate stall.
    """
    b = np.maximum(np.asarray(speed_sq, dtype=float).reshape(-1), 0.0)
    if b.size != grid.intervals + 1:
        raise ValueError("speed profile length does not match the grid")
    roots = np.sqrt(b)
    scale = max(1.0, float(roots.max()))
    times = np.zeros(grid.intervals + 1)
    for k in range(grid.intervals):
        denom = roots[k] + roots[k + 1]
        if denom <= STALL_TOLERANCE * scale:
            raise ValueError(f"degenerate stall: both speed values vanish on interval {k}")
        times[k + 1] = times[k] + 2.0 * grid.spacing / denom
    return PathTiming(total=float(times[-1]), node_times=times, grid=grid, speed_sq=b)
