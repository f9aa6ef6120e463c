"""Scenario campaigns and the `simulate` command line.

Every scenario fills a `RunResult` (metric rows, PSD traces, learning
trajectories, auxiliary tables) that is written to the output directory even
when the campaign aborts part-way, so a failed sweep still leaves the drops that
completed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import complexity as cx
from . import config as cf
from . import dpd
from . import formats as fm
from . import metrics as mt
from . import system as sy
from .config import ScenarioConfig
from .errors import ConfigurationError, SimulationError

log = logging.getLogger(__name__)

NAN = float("nan")


class ScenarioError(SimulationError):
    """A module error annotated with the scenario and drop in which it happened."""

    def __init__(self, scenario: str, drop: Optional[int], cause: Exception):
        where = f"scenario {scenario}" + ("" if drop is None else f", drop {drop}")
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
        self.scenario = scenario
        self.drop = drop
        self.cause = cause


@dataclass
class RunResult:
    scenario: str
    metrics: List[tuple] = field(default_factory=list)
    psd: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    trajectory: List[tuple] = field(default_factory=list)
    tables: Dict[str, Tuple[Sequence[str], List[tuple]]] = field(default_factory=dict)
    summary: Dict[str, object] = field(default_factory=dict)

    def add_users(self, label: str, report: sy.UserReport) -> None:
        for u in range(report.aclr.shape[0]):
            self.metrics.append((self.scenario, f"{label}/ue{u + 1}", float(report.evm[u]),
                                 float(report.aclr[u, 0]), float(report.aclr[u, 1])))

    def add_victims(self, label: str, aclr: np.ndarray) -> None:
        for v in range(aclr.shape[0]):
            self.metrics.append((self.scenario, f"{label}/victim{v + 1}", NAN, float(aclr[v, 0]), float(aclr[v, 1])))

    def add_trajectory(self, label: str, traj: Optional[dpd.LearningTrajectory]) -> None:
        if traj is not None:
            self.trajectory.extend((label,) + tuple(r) for r in traj.rows)

    def add_psd(self, label: str, z: np.ndarray, cfg: ScenarioConfig) -> None:
        self.psd[label] = mt.psd(z, sample_rate=cfg.ofdm.sample_rate)

    def column(self, prefix: str, suffix: str = "") -> List[tuple]:
        return [r for r in self.metrics if r[1].startswith(prefix) and r[1].endswith(suffix)]


def write_outputs(result: RunResult, cfg: ScenarioConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fm.write_csv(out / "metrics.csv", fm.METRICS_HEADER, result.metrics)
    fm.write_csv(out / "trajectory.csv", ("label",) + fm.TRAJECTORY_HEADER, result.trajectory)
    for label, (f, p) in result.psd.items():
        fm.write_psd(out / f"psd_{label.replace('/', '_')}.csv", f, p, label)
    for name, (header, rows) in result.tables.items():
        fm.write_csv(out / f"{name}.csv", header, rows)
    (out / "run_manifest").write_text(cf.dumps(cfg))
    return out


# ----------------------------------------------------------------------------
# helpers


def _methods(cfg: ScenarioConfig) -> Tuple[str, ...]:
    return tuple(m for m in ("CL", "ILA") if m in cfg.dpd.methods)


def _evaluate_methods(res: RunResult, link: sy.Link, label: str, methods: Sequence[str],
                      psd: bool = True) -> Dict[str, sy.UserReport]:
    """No-DPD, ICF floor and each learned method at the intended users of one link."""
    cfg = link.cfg
    reports = {}
    g_hat = sy.estimate_responses(link) if methods else None
    for method in ("none",) + tuple(methods):
        state, traj = sy.learn(link, method, g_hat)
        rep = sy.evaluate_users(link, state, keep_signals=psd)
        reports[method] = rep
        res.add_users(f"{label}/{method}", rep)
        res.add_trajectory(f"{label}/{method}", traj)
        if psd:
            for u in range(rep.z.shape[0]):
                res.add_psd(f"{label}_{method}_ue{u + 1}", rep.z[u], cfg)
    floor = sy.clean_floor_evm(link)
    for u, e in enumerate(floor):
        res.metrics.append((res.scenario, f"{label}/floor/ue{u + 1}", float(e), NAN, NAN))
    res.summary.setdefault("floor_evm", {})[label] = floor.tolist()
    res.summary.setdefault("papr_db", {})[label] = [mt.papr(link.x[l]) for l in range(link.x.shape[0])]
    for method, rep in reports.items():
        res.summary.setdefault("aclr", {})[f"{label}/{method}"] = rep.aclr.tolist()
        res.summary.setdefault("evm", {})[f"{label}/{method}"] = rep.evm.tolist()
    return reports


def draw_user_angles(cfg: ScenarioConfig, drop: int) -> np.ndarray:
    """Random intended-user directions (degrees) that the array can serve together.

    A draw is rejected when two users are closer than the minimum separation or when
    the LOS equivalent channel of their beams is worse conditioned than the bound,
    the way a scheduler would refuse to co-schedule an inseparable pair.
    """
    sw, u = cfg.sweep, cfg.system.n_users
    rng = sy.rng_for(cfg, drop, "user_angles")
    for _ in range(10000):
        a = np.sort(rng.uniform(-sw.user_range_deg, sw.user_range_deg, u))
        if u >= 2 and np.min(np.diff(a)) < sw.min_user_separation_deg:
            continue
        if u < 2 or not sw.max_pair_condition or sy.los_pair_condition(cfg, np.deg2rad(a)) <= sw.max_pair_condition:
            return a
    raise ConfigurationError("cannot place the users with the requested minimum separation")


# ----------------------------------------------------------------------------
# scenarios


def run_intended_ue(cfg: ScenarioConfig, res: RunResult, ctx: list) -> None:
    ctx[0] = 0
    link = sy.draw_link(cfg, 0)
    _evaluate_methods(res, link, "drop0", _methods(cfg))


def run_imperfect_csi(cfg: ScenarioConfig, res: RunResult, ctx: list) -> None:
    if cfg.chi >= 1.0 and not cfg.phase_bits:
        raise ConfigurationError("imperfect_csi needs chi < 1 or a finite analog phase resolution")
    ctx[0] = 0
    link = sy.draw_link(cfg, 0)
    res.summary["csi_error_db"] = link.csi_error_db
    _evaluate_methods(res, link, "drop0", _methods(cfg))


def run_subarray_decomposition(cfg: ScenarioConfig, res: RunResult, ctx: list) -> None:
    """Per-subarray contributions at each user, for both analog beamformer types."""
    ctx[0] = 0
    array = sy.build_array(cfg)
    modes = ("single_beam", "multi_beam") if cfg.system.n_users == cfg.system.n_subarrays else ("multi_beam",)
    for mode in modes:
        link = sy.draw_link(cfg, 0, array=array, beam_mode=mode)
        state, traj = sy.learn_cl(link)
        res.add_trajectory(f"{mode}/CL", traj)
        for method, st in (("none", None), ("CL", state)):
            xt = dpd.predistort_all(link.x, st)
            total = link.at_users(xt)
            rep = sy.evaluate_users(link, st)
            res.add_users(f"{mode}/{method}/combined", rep)
            for l in range(link.n_subarrays):
                part = link.at_users(xt, subarrays=[l])
                for u in range(part.shape[0]):
                    # in-channel power of the full received signal, adjacent power of this subarray
                    left, right = mt.aclr(total[u], part[u], cfg.ofdm.bandwidth, cfg.ofdm.sample_rate,
                                          cfg.channel_spacing)
                    res.metrics.append((res.scenario, f"{mode}/{method}/sub{l + 1}/ue{u + 1}", NAN, left, right))
                    res.add_psd(f"{mode}_{method}_sub{l + 1}_ue{u + 1}", part[u], cfg)


def run_isolation_sweep(cfg: ScenarioConfig, res: RunResult, ctx: list) -> None:
    """Direct-link vs cross-link OOB power as one user moves away from the other.

    The CL predistorters are learned once, at the first separation of the first
    realization, and frozen for every other geometry.
    """
    if cfg.system.n_users != 2 or cfg.system.n_subarrays != 2:
        raise ConfigurationError("isolation_sweep needs two users and two subarrays")
    array = sy.build_array(cfg)
    base = cfg.system.user_angles_deg[0]
    rows = []
    for mode in ("single_beam", "multi_beam"):
        frozen = None
        for sep in cfg.sweep.separations_deg:
            oob = {k: [] for k in ("direct_none", "cross_none", "direct_CL", "cross_CL")}
            for drop in range(cfg.sweep.isolation_drops):
                ctx[0] = drop
                link = sy.draw_link(cfg, drop, angles_deg=(base, base + sep), array=array, beam_mode=mode)
                if frozen is None:
                    frozen, traj = sy.learn_cl(link)
                    res.add_trajectory(f"{mode}/CL", traj)
                for method, st in (("none", None), ("CL", frozen)):
                    xt = dpd.predistort_all(link.x, st)
                    for l in range(2):
                        z = link.at_users(xt, subarrays=[l])
                        oob[f"direct_{method}"].append(sy.oob_power(z[l], cfg))
                        oob[f"cross_{method}"].append(sy.oob_power(z[1 - l], cfg))
                    if drop == 0:
                        res.add_users(f"{mode}/sep{sep:g}/{method}", sy.evaluate_users(link, st))
            db = {k: 10 * np.log10(np.mean(v)) for k, v in oob.items()}
            iso = db["direct_none"] - db["cross_none"]
            g_dir = db["direct_none"] - db["direct_CL"]
            g_cross = db["cross_none"] - db["cross_CL"]
            rows.append((mode, float(sep), iso, g_dir, g_cross, iso + g_cross))
    header = ("beam_mode", "separation_deg", "array_isolation_db", "dpd_gain_direct_db",
              "dpd_gain_cross_db", "cross_link_total_db")
    res.tables["isolation"] = (header, rows)
    res.summary["isolation"] = rows


def run_spatial_sweep(cfg: ScenarioConfig, res: RunResult, ctx: list) -> None:
    """Random user drops with victims; DPD re-learned per drop and/or frozen from drop 0."""
    sw = cfg.sweep
    modes = ("relearn", "freeze") if sw.dpd_mode == "both" else (sw.dpd_mode,)
    array = sy.build_array(cfg)
    first_state = None
    stats = {k: [] for k in ("intended_none", "victim_none")}
    for m in modes:
        stats[f"intended_{m}"] = []
        stats[f"victim_{m}"] = []
    for drop in range(sw.n_drops):
        ctx[0] = drop
        link = sy.draw_link(cfg, drop, angles_deg=draw_user_angles(cfg, drop), array=array)
        victims = sy.victim_angles(cfg, drop)
        relearned, traj = sy.learn_cl(link) if ("relearn" in modes or drop == 0) else (None, None)
        if drop == 0:
            first_state = relearned
            res.add_trajectory("drop0/CL", traj)
        states = {"none": None}
        if "relearn" in modes:
            states["relearn"] = relearned
        if "freeze" in modes:
            states["freeze"] = first_state
        for name, st in states.items():
            rep = sy.evaluate_users(link, st)
            res.add_users(f"drop{drop}/{name}", rep)
            stats[f"intended_{name}"].extend(rep.worst.tolist())
            if victims.size:
                va = sy.evaluate_victims(link, st, float(np.mean(rep.in_band)), victims, drop)
                res.add_victims(f"drop{drop}/{name}", va)
                stats[f"victim_{name}"].extend(va.min(axis=1).tolist())
        log.info("spatial drop %d done", drop)
    res.summary["spatial"] = {k: np.asarray(v) for k, v in stats.items()}


def run_crosstalk_sweep(cfg: ScenarioConfig, res: RunResult, ctx: list) -> None:
    """Intended-user ACLR of each method versus the neighbouring-antenna coupling level."""
    rows = []
    for level in cfg.crosstalk.sweep_antenna_db:
        ctx[0] = 0
        array = sy.build_array(cfg, crosstalk=True, antenna_db=level)
        link = sy.draw_link(cfg, 0, array=array)
        reports = _evaluate_methods(res, link, f"xt{level:g}", _methods(cfg), psd=False)
        for method, rep in reports.items():
            rows.append((float(level), method, *rep.worst.tolist()))
    header = ("antenna_crosstalk_db", "method") + tuple(f"worst_aclr_ue{u + 1}_db" for u in range(cfg.system.n_users))
    res.tables["crosstalk_sweep"] = (header, rows)
    res.summary["crosstalk_sweep"] = rows


def run_complexity_table(cfg: ScenarioConfig, res: RunResult, ctx: list) -> None:
    d = cfg.dpd
    p = cx.ComplexityParams.from_dpd(cfg.system.n_subarrays, d.order, d.memory)
    rows = cx.table_rows(L=p.L, N_IBF=p.N_IBF, N_BF=p.N_BF, D_lin=d.linear_taps,
                         N_CL=d.cl_block_size, I_CL=d.cl_blocks, N_ILA=d.ila_block_size, I_ILA=d.ila_iterations)
    header = ("method", "stage", "quantity", "value", "unit")
    res.tables["complexity_table"] = (header, [tuple(r[h] for h in header) for r in rows])
    res.summary["complexity"] = rows


SCENARIO_RUNNERS: Dict[str, Callable] = {
    "intended_ue": run_intended_ue,
    "subarray_decomposition": run_subarray_decomposition,
    "isolation_sweep": run_isolation_sweep,
    "spatial_sweep": run_spatial_sweep,
    "crosstalk_sweep": run_crosstalk_sweep,
    "imperfect_csi": run_imperfect_csi,
    "complexity_table": run_complexity_table,
}


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    """Run `cfg.scenario`; writes outputs to `out_dir` if given (also after a failure)."""
    res = RunResult(cfg.scenario)
    ctx: list = [None]
    try:
        SCENARIO_RUNNERS[cfg.scenario](cfg, res, ctx)
    except SimulationError as exc:
        if out_dir is not None:
            write_outputs(res, cfg, out_dir)
        raise ScenarioError(cfg.scenario, ctx[0], exc) from exc
    if out_dir is not None:
        write_outputs(res, cfg, out_dir)
    return res


# ----------------------------------------------------------------------------
# command line


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Hybrid-MIMO DPD scenario runner")
    p.add_argument("config", help="INI configuration file")
    p.add_argument("--scenario", choices=cf.SCENARIOS)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="results", help="output directory (default: ./results)")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one configuration value (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_overrides(cfg: ScenarioConfig, items: Sequence[str]) -> ScenarioConfig:
    parsed = {}
    for item in items:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(f"override {item!r} is not SECTION.KEY=VALUE")
        key, raw = item.split("=", 1)
        section, name = key.split(".", 1)
        obj = getattr(cfg, cf._ATTR.get(section, section), None)
        if obj is None or not hasattr(obj, name):
            raise ConfigurationError(f"unknown override {key!r}")
        parsed[key] = cf._parse(raw, getattr(obj, name), key)
    return cf.override(cfg, parsed) if parsed else cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = cf.load(args.config, args.profile, scenario=args.scenario, seed=args.seed)
        cfg = parse_overrides(cfg, args.set)
        res = run_scenario(cfg, args.out)
    except (SimulationError, OSError) as exc:
        print(f"simulate: error: {exc}", file=sys.stderr)
        return 1
    print(f"{cfg.scenario}: {len(res.metrics)} metric rows written to {args.out}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
