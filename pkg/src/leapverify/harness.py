"""Three-pass experiment protocol, aggregation, and report emission.

Pass 1 trains each seed with periodic checkpoints and regime labels. Pass 2
replays every non-chaotic checkpoint through the full predictor x K grid,
scoring all three acceptance criteria offline (nothing is applied to the
run). Pass 3 chains cascaded predictions from stable checkpoints. Statistics
follow the per-seed-first convention: rates are computed within each seed,
then summarized as mean/std/CoV across seeds, with denominators carried
alongside every rate so each percentage is auditable.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import (
    SWEEP_PREDICTORS,
    RunConfig,
    config_dict,
    format_config,
    resolve_out_root,
)
from .engine import (
    CascadeConfig,
    LeapEvent,
    RunResult,
    accepted_depth,
    run_cascade,
    speculate,
    train_run,
)
from .optim import AdamHyper
from .predict import HISTORY_REQUIRED, MOMENTUM, QUADRATIC, QUADRATIC_EXACT
from .regime import RegimeLabel, Thresholds, calibrate, regime_breakdown
from .tasks import Task, make_task
from .trajectory import (
    Checkpoint,
    InsufficientHistoryError,
    WindowSpacingError,
    load_run_checkpoints,
    recent_loss_std,
)
from .verify import CRITERIA, Decision, decide

SWEEP_CSV_HEADER = (
    "seed,step,regime,predictor,K,L_hat,L_t,"
    "strict,adaptive,proximity,displacement_norm,eligible"
)


class PassError(RuntimeError):
    """A protocol pass failed; message names the pass and seed."""


@dataclass(frozen=True)
class SweepCell:
    """One offline speculation: a checkpoint x predictor x K grid point.

    Ineligible cells (window too short for the predictor) keep their place in
    the grid with NaN prediction fields and no decision.
    """

    seed: int
    checkpoint_step: int
    regime: RegimeLabel
    predictor: str
    k: int
    l_hat: float
    l_t: float
    decision: Decision | None
    displacement_norm: float
    eligible: bool


@dataclass(frozen=True)
class CascadeRow:
    seed: int
    start_step: int
    depth: int
    k: int
    predictor: str
    criterion: str
    accepted_depth: int
    events: tuple[LeapEvent, ...]


@dataclass(frozen=True)
class PerSeedRate:
    seed: int
    accepted: int
    denominator: int

    @property
    def rate(self) -> float:
        return 100.0 * self.accepted / self.denominator


@dataclass(frozen=True)
class RateStat:
    """mean +/- std across seeds of a per-seed percentage, with receipts."""

    mean: float
    std: float
    cov: float | None   # None when mean == 0 (undefined, printed as a dash)
    per_seed: tuple[PerSeedRate, ...]
    single_seed: bool

    @property
    def accepted(self) -> int:
        return sum(p.accepted for p in self.per_seed)

    @property
    def denominator(self) -> int:
        return sum(p.denominator for p in self.per_seed)


@dataclass
class ExperimentReport:
    config: dict
    seeds: tuple[int, ...]
    regime_counts: dict[int, dict[str, int]]
    regime_summary: dict[str, dict[str, float]]
    acceptance: dict[tuple[str, str, int, str], RateStat]
    cov: dict[tuple[str, int, str], RateStat]
    ratios: dict[str, list[dict]]
    cascades: list[dict]
    cascade_note: str | None
    notes: list[str]


# ---------------------------------------------------------------- plumbing

def build_task(cfg: RunConfig) -> Task:
    return make_task(cfg.task, batch_size=cfg.batch_size, probe_count=cfg.probe_count,
                     noise=cfg.noise, dim=cfg.dim, data_seed=cfg.data_seed)


def build_hyper(cfg: RunConfig, task: Task) -> AdamHyper:
    lr = cfg.lr if cfg.lr is not None else task.recommended_lr
    return AdamHyper(lr=lr, beta1=cfg.beta1, beta2=cfg.beta2,
                     weight_decay=cfg.weight_decay, eps=cfg.eps,
                     warmup_steps=cfg.warmup_steps, total_steps=cfg.steps)


def run_dir_for(out_root: str | Path, task_name: str, seed: int) -> Path:
    return Path(out_root) / "runs" / task_name / str(seed)


def resolve_predictor(predictor: str, quad_variant: str) -> str:
    """Map the user-facing predictor id to the formula actually evaluated."""
    if predictor == QUADRATIC and quad_variant == "exact":
        return QUADRATIC_EXACT
    return predictor


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _checkpoint_spacing(ckpts: list[Checkpoint]) -> int:
    if len(ckpts) < 2:
        return 1  # spacing is irrelevant below the two-checkpoint mark
    diffs = {b.step - a.step for a, b in zip(ckpts, ckpts[1:])}
    if len(diffs) != 1:
        raise WindowSpacingError(f"uneven checkpoint spacing: {sorted(diffs)}")
    return diffs.pop()


def _sigma_at(losses: list[float], upto: int, window: int) -> float | None:
    try:
        return recent_loss_std(losses[: upto + 1], window)
    except InsufficientHistoryError:
        return None


# ------------------------------------------------------------- the passes

def calibrate_thresholds(cfg: RunConfig, task: Task | None = None) -> Thresholds:
    """Quantile-calibrate regime thresholds from fresh calibration runs."""
    task = task if task is not None else build_task(cfg)
    hyper = build_hyper(cfg, task)
    traces = []
    for seed in cfg.calibration_seeds:
        result = train_run(task, seed, total_steps=cfg.steps, delta=cfg.delta,
                           hyper=hyper)
        traces.append([s for s in result.similarities if s is not None])
    return calibrate(traces, cfg.q_low, cfg.q_high)


def pass1_train(task: Task, seed: int, cfg: RunConfig, thresholds: Thresholds,
                out_root: str | Path) -> RunResult:
    """Train one seed, persisting checkpoints and the loss log to its run dir."""
    run_dir = run_dir_for(out_root, task.name, seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    for stale in run_dir.glob("ckpt_*.lpv"):
        stale.unlink()  # a shorter rerun must not leave orphan steps behind
    events = run_dir / "events.jsonl"
    if events.exists():
        events.unlink()

    hyper = build_hyper(cfg, task)
    result = train_run(task, seed, total_steps=cfg.steps, delta=cfg.delta,
                       hyper=hyper, thresholds=thresholds, epsilon=cfg.epsilon,
                       adaptive_window=cfg.adaptive_window,
                       momentum_variant=cfg.momentum_variant,
                       ff_policy=cfg.ff_policy, store_dir=run_dir)
    write_loss_log(result, run_dir)
    return result


def write_loss_log(result: RunResult, run_dir: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["step", "val_loss", "similarity", "regime"])
    for ckpt, sim in zip(result.checkpoints, result.similarities):
        writer.writerow([ckpt.step, repr(ckpt.val_loss),
                         "" if sim is None else repr(sim), ckpt.regime.value])
    write_atomic(Path(run_dir) / "loss_log.csv", buf.getvalue())


def pass2_ksweep(run_dir: str | Path, task: Task, hyper: AdamHyper, *,
                 k_set: tuple[int, ...], epsilon: float, adaptive_window: int = 5,
                 momentum_variant: str = "paper",
                 quad_variant: str = "paper") -> list[SweepCell]:
    """Score the full predictor x K grid at every non-chaotic checkpoint.

    All three criteria are recorded per cell; checkpoints whose history is
    too short for a predictor yield ineligible placeholder cells so the grid
    stays rectangular.
    """
    ckpts = load_run_checkpoints(run_dir)
    delta = _checkpoint_spacing(ckpts)
    losses = [c.val_loss for c in ckpts]

    cells: list[SweepCell] = []
    for i, ckpt in enumerate(ckpts):
        if ckpt.regime == RegimeLabel.CHAOTIC:
            continue
        sigma = _sigma_at(losses, i, adaptive_window)
        window = tuple(ckpts[max(0, i - 2): i + 1])
        for predictor in SWEEP_PREDICTORS:
            internal = resolve_predictor(predictor, quad_variant)
            usable = len(window) >= HISTORY_REQUIRED[internal]
            for k in k_set:
                if not usable:
                    cells.append(SweepCell(
                        seed=ckpt.seed, checkpoint_step=ckpt.step,
                        regime=ckpt.regime, predictor=predictor, k=k,
                        l_hat=float("nan"), l_t=ckpt.val_loss, decision=None,
                        displacement_norm=float("nan"), eligible=False))
                    continue
                pred, l_hat = speculate(window, delta, internal, k, task,
                                        hyper, momentum_variant)
                decision = decide(l_hat, ckpt.val_loss, sigma, epsilon)
                cells.append(SweepCell(
                    seed=ckpt.seed, checkpoint_step=ckpt.step,
                    regime=ckpt.regime, predictor=predictor, k=k,
                    l_hat=l_hat, l_t=ckpt.val_loss, decision=decision,
                    displacement_norm=pred.displacement_norm, eligible=True))
    return cells


def pass3_cascades(run_dir: str | Path, task: Task, hyper: AdamHyper, *,
                   configs: tuple[tuple[int, int], ...], criterion: str,
                   epsilon: float, adaptive_window: int = 5,
                   momentum_variant: str = "paper",
                   quad_variant: str = "paper") -> list[CascadeRow]:
    """Evaluate cascaded predictions from every stable checkpoint.

    Returns one row per (stable checkpoint, config, predictor) whose history
    admits the predictor; an empty list simply means the run had no usable
    stable checkpoints.
    """
    ckpts = load_run_checkpoints(run_dir)
    losses = [c.val_loss for c in ckpts]
    rows: list[CascadeRow] = []
    for i, ckpt in enumerate(ckpts):
        if ckpt.regime != RegimeLabel.STABLE:
            continue
        sigma = _sigma_at(losses, i, adaptive_window)
        window = tuple(ckpts[max(0, i - 2): i + 1])
        for d, k in configs:
            for predictor in SWEEP_PREDICTORS:
                internal = resolve_predictor(predictor, quad_variant)
                if len(window) < HISTORY_REQUIRED[internal]:
                    continue
                events = run_cascade(window, CascadeConfig(depth=d, k=k),
                                     internal, criterion, task, hyper,
                                     sigma_l=sigma, epsilon=epsilon,
                                     momentum_variant=momentum_variant)
                rows.append(CascadeRow(
                    seed=ckpt.seed, start_step=ckpt.step, depth=d, k=k,
                    predictor=predictor, criterion=criterion,
                    accepted_depth=accepted_depth(events, criterion),
                    events=tuple(events)))
    return rows


# --------------------------------------------------------- CSV and JSONL

def _csv_bool(value: bool | None) -> str:
    return "" if value is None else ("1" if value else "0")


def write_sweep_csv(cells: list[SweepCell], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(SWEEP_CSV_HEADER.split(","))
    for c in cells:
        d = c.decision
        writer.writerow([
            c.seed, c.checkpoint_step, c.regime.value, c.predictor, c.k,
            repr(c.l_hat) if c.eligible else "",
            repr(c.l_t),
            _csv_bool(d.strict if d else None),
            _csv_bool(d.adaptive if d else None),
            _csv_bool(d.proximity if d else None),
            repr(c.displacement_norm) if c.eligible else "",
            "1" if c.eligible else "0",
        ])
    write_atomic(path, buf.getvalue())


def read_sweep_csv(path: str | Path, epsilon: float = 0.05) -> list[SweepCell]:
    """Rebuild sweep cells from CSV (criterion verdicts are authoritative)."""
    cells: list[SweepCell] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SWEEP_CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected sweep CSV header {reader.fieldnames}")
        for row in reader:
            eligible = row["eligible"] == "1"
            l_t = float(row["L_t"])
            if eligible:
                l_hat = float(row["L_hat"])
                decision = Decision(
                    strict=row["strict"] == "1",
                    adaptive=None if row["adaptive"] == "" else row["adaptive"] == "1",
                    proximity=row["proximity"] == "1",
                    l_hat=l_hat, l_t=l_t, sigma_l=None, epsilon=epsilon)
                disp = float(row["displacement_norm"])
            else:
                l_hat, decision, disp = float("nan"), None, float("nan")
            cells.append(SweepCell(
                seed=int(row["seed"]), checkpoint_step=int(row["step"]),
                regime=RegimeLabel(row["regime"]), predictor=row["predictor"],
                k=int(row["K"]), l_hat=l_hat, l_t=l_t, decision=decision,
                displacement_norm=disp, eligible=eligible))
    return cells


def _cascade_row_json(row: CascadeRow) -> dict:
    return {
        "seed": row.seed,
        "start_step": row.start_step,
        "depth": row.depth,
        "k": row.k,
        "predictor": row.predictor,
        "criterion": row.criterion,
        "accepted_depth": row.accepted_depth,
        "events": [ev.to_json() for ev in row.events],
    }


def write_cascade_rows(rows: list[CascadeRow], path: str | Path) -> None:
    text = "".join(json.dumps(_cascade_row_json(r)) + "\n" for r in rows)
    write_atomic(path, text)


def read_cascade_rows(path: str | Path) -> list[CascadeRow]:
    """Reload cascade rows; per-stage events are not reconstructed."""
    rows: list[CascadeRow] = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        rows.append(CascadeRow(
            seed=obj["seed"], start_step=obj["start_step"], depth=obj["depth"],
            k=obj["k"], predictor=obj["predictor"], criterion=obj["criterion"],
            accepted_depth=obj["accepted_depth"], events=()))
    return rows


# ------------------------------------------------------------ aggregation

def _rate_stat(per_seed: dict[int, list[int]]) -> RateStat | None:
    entries = tuple(PerSeedRate(seed, acc, den)
                    for seed, (acc, den) in sorted(per_seed.items()) if den > 0)
    if not entries:
        return None
    rates = [e.rate for e in entries]
    mean = float(np.mean(rates))
    std = 0.0 if len(rates) < 2 else float(np.std(rates, ddof=1))
    cov = None if mean == 0.0 else 100.0 * std / mean
    return RateStat(mean=mean, std=std, cov=cov, per_seed=entries,
                    single_seed=len(entries) == 1)


def ratio_table(cells: list[SweepCell], predictor: str) -> list[dict]:
    """Per K: mean predicted loss vs mean actual loss over evaluated cells.

    Cells with a non-finite prediction are excluded from both means and
    counted, so a predictor that overflows outright still reports honestly.
    """
    by_k: dict[int, list[SweepCell]] = {}
    for c in cells:
        if c.predictor == predictor and c.eligible:
            by_k.setdefault(c.k, []).append(c)
    table = []
    for k in sorted(by_k):
        # canonical order: float means must not depend on input cell order
        group = sorted(by_k[k], key=lambda c: (c.seed, c.checkpoint_step))
        finite = [c for c in group if math.isfinite(c.l_hat)]
        excluded = len(group) - len(finite)
        if not finite:
            table.append({"k": k, "n": 0, "excluded_nonfinite": excluded,
                          "mean_predicted": None, "mean_actual": None, "ratio": None})
            continue
        mean_pred = float(np.mean([c.l_hat for c in finite]))
        mean_actual = float(np.mean([c.l_t for c in finite]))
        table.append({
            "k": k,
            "n": len(finite),
            "excluded_nonfinite": excluded,
            "mean_predicted": mean_pred,
            "mean_actual": mean_actual,
            "ratio": mean_pred / mean_actual if mean_actual > 0 else None,
        })
    return table


def momentum_ratio_table(cells: list[SweepCell]) -> list[dict]:
    return ratio_table(cells, MOMENTUM)


def aggregate(cells: list[SweepCell], cascade_rows: list[CascadeRow],
              labels_by_seed: dict[int, list[RegimeLabel]],
              config: dict) -> ExperimentReport:
    """Reduce all seeds' cells to the experiment report.

    Pure function of its inputs up to reordering: every grouping is keyed and
    sorted, so seed or cell order cannot change a single output value.
    """
    seeds = tuple(sorted(labels_by_seed))
    notes: list[str] = []
    if len(seeds) == 1:
        notes.append("single seed: cross-seed std is 0 by convention")

    regime_counts = {
        seed: {label.value: count
               for label, count in regime_breakdown(labels_by_seed[seed]).items()}
        for seed in seeds
    }
    regime_summary = {}
    for label in RegimeLabel:
        counts = [regime_counts[s][label.value] for s in seeds]
        std = 0.0 if len(counts) < 2 else float(np.std(counts, ddof=1))
        regime_summary[label.value] = {"mean": float(np.mean(counts)), "std": std}

    acc_groups: dict[tuple[str, str, int, str], dict[int, list[int]]] = {}
    cov_groups: dict[tuple[str, int, str], dict[int, list[int]]] = {}
    for c in cells:
        if not c.eligible:
            continue
        for criterion in CRITERIA:
            verdict = c.decision.verdict(criterion)
            if verdict is None:
                continue
            a_key = (c.regime.value, c.predictor, c.k, criterion)
            cell = acc_groups.setdefault(a_key, {}).setdefault(c.seed, [0, 0])
            cell[0] += int(verdict)
            cell[1] += 1
            c_key = (c.predictor, c.k, criterion)
            cell = cov_groups.setdefault(c_key, {}).setdefault(c.seed, [0, 0])
            cell[0] += int(verdict)
            cell[1] += 1

    acceptance = {}
    for key in sorted(acc_groups):
        stat = _rate_stat(acc_groups[key])
        if stat is not None:
            acceptance[key] = stat
    cov = {}
    for key in sorted(cov_groups):
        stat = _rate_stat(cov_groups[key])
        if stat is not None:
            cov[key] = stat

    ratios = {p: ratio_table(cells, p) for p in SWEEP_PREDICTORS}

    cascades = []
    by_cfg: dict[tuple[int, int, str], list[CascadeRow]] = {}
    for row in cascade_rows:
        by_cfg.setdefault((row.depth, row.k, row.predictor), []).append(row)
    for (depth, k, predictor) in sorted(by_cfg):
        rows = by_cfg[(depth, k, predictor)]
        depth_by_seed: dict[int, list[int]] = {}
        for r in rows:
            depth_by_seed.setdefault(r.seed, []).append(r.accepted_depth)
        per_seed_means = [float(np.mean(depth_by_seed[s])) for s in sorted(depth_by_seed)]
        std = 0.0 if len(per_seed_means) < 2 else float(np.std(per_seed_means, ddof=1))
        cascades.append({
            "depth": depth,
            "k": k,
            "predictor": predictor,
            "starts": len(rows),
            "seeds": len(depth_by_seed),
            "mean_accepted_depth": float(np.mean(per_seed_means)),
            "std_accepted_depth": std,
            "max_accepted_depth": max(r.accepted_depth for r in rows),
            "full_depth_count": sum(r.accepted_depth == depth for r in rows),
        })
    cascade_note = None
    if not cascade_rows:
        cascade_note = "no stable checkpoints with sufficient history: cascade table has zero denominators"

    return ExperimentReport(
        config=config,
        seeds=seeds,
        regime_counts=regime_counts,
        regime_summary=regime_summary,
        acceptance=acceptance,
        cov=cov,
        ratios=ratios,
        cascades=cascades,
        cascade_note=cascade_note,
        notes=notes,
    )


# ---------------------------------------------------------------- reports

def _stat_json(stat: RateStat) -> dict:
    return {
        "mean": stat.mean,
        "std": stat.std,
        "cov": stat.cov,
        "single_seed": stat.single_seed,
        "accepted": stat.accepted,
        "denominator": stat.denominator,
        "per_seed": [
            {"seed": p.seed, "accepted": p.accepted,
             "denominator": p.denominator, "rate": p.rate}
            for p in stat.per_seed
        ],
    }


def report_to_json(report: ExperimentReport) -> dict:
    return {
        "config": report.config,
        "seeds": list(report.seeds),
        "regime_counts": {str(s): report.regime_counts[s] for s in report.seeds},
        "regime_summary": report.regime_summary,
        "acceptance": {
            f"{regime}|{predictor}|{k}|{criterion}": _stat_json(stat)
            for (regime, predictor, k, criterion), stat in report.acceptance.items()
        },
        "cov": {
            f"{predictor}|{k}|{criterion}": _stat_json(stat)
            for (predictor, k, criterion), stat in report.cov.items()
        },
        "ratios": report.ratios,
        "cascades": report.cascades,
        "cascade_note": report.cascade_note,
        "notes": report.notes,
    }


def _fmt_float(x: float | None, nd: int = 2) -> str:
    if x is None:
        return "-"
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return f"{x:.{nd}f}"


def _render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for j, cell in enumerate(row):
            widths[j] = max(widths[j], len(cell))
    def fmt(row: list[str]) -> str:
        return "  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip()
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(headers), rule] + [fmt(r) for r in rows])


def format_report_text(report: ExperimentReport) -> str:
    out: list[str] = []
    out.append(f"Seeds: {', '.join(str(s) for s in report.seeds)}")
    for note in report.notes:
        out.append(f"Note: {note}")
    out.append("")

    out.append("Regime breakdown (checkpoints per run, mean +/- std across seeds)")
    rows = []
    for label in RegimeLabel:
        s = report.regime_summary[label.value]
        per_seed = " ".join(str(report.regime_counts[sd][label.value]) for sd in report.seeds)
        rows.append([label.value, f"{_fmt_float(s['mean'], 1)} +/- {_fmt_float(s['std'], 1)}", per_seed])
    out.append(_render_table(["regime", "count", "per-seed"], rows))
    out.append("")

    k_values = sorted({k for (_, _, k, _) in report.acceptance})
    regimes = sorted({r for (r, _, _, _) in report.acceptance})
    predictors = sorted({p for (_, p, _, _) in report.acceptance})
    for criterion in CRITERIA:
        for regime in regimes:
            rows = []
            for predictor in predictors:
                row = [predictor]
                hit = False
                for k in k_values:
                    stat = report.acceptance.get((regime, predictor, k, criterion))
                    if stat is None:
                        row.append("-")
                    else:
                        hit = True
                        row.append(f"{_fmt_float(stat.mean, 1)}+/-{_fmt_float(stat.std, 1)} (n={stat.denominator})")
                if hit:
                    rows.append(row)
            if rows:
                out.append(f"Acceptance rate % ({criterion} criterion, {regime} regime)")
                out.append(_render_table(["predictor"] + [f"K={k}" for k in k_values], rows))
                out.append("")

    mom = report.ratios.get("momentum", [])
    if mom:
        out.append("Momentum predictor: predicted vs actual held-out loss")
        rows = []
        for row in mom:
            rows.append([
                str(row["k"]),
                _fmt_float(row["mean_predicted"], 4),
                _fmt_float(row["mean_actual"], 4),
                ("-" if row["ratio"] is None else f"{row['ratio']:.1f}x"),
                str(row["n"]),
                str(row["excluded_nonfinite"]),
            ])
        out.append(_render_table(["K", "predicted", "actual", "ratio", "n", "nonfinite"], rows))
        out.append("")

    if report.cov:
        for criterion in CRITERIA:
            rows = []
            for predictor in predictors:
                row = [predictor]
                hit = False
                for k in k_values:
                    stat = report.cov.get((predictor, k, criterion))
                    if stat is None or stat.cov is None:
                        row.append("-")
                        hit = hit or stat is not None
                    else:
                        hit = True
                        row.append(_fmt_float(stat.cov, 1))
                if hit:
                    rows.append(row)
            if rows:
                out.append(f"Cross-seed CoV % of acceptance rate ({criterion} criterion)")
                out.append(_render_table(["predictor"] + [f"K={k}" for k in k_values], rows))
                out.append("")

    out.append("Cascades (accepted depth out of configured depth)")
    if report.cascade_note:
        out.append(f"Note: {report.cascade_note}")
    if report.cascades:
        rows = []
        for c in report.cascades:
            rows.append([
                f"({c['depth']},{c['k']})", c["predictor"], str(c["starts"]),
                f"{_fmt_float(c['mean_accepted_depth'])} +/- {_fmt_float(c['std_accepted_depth'])}",
                str(c["max_accepted_depth"]), str(c["full_depth_count"]),
            ])
        out.append(_render_table(["(D,K)", "predictor", "starts", "mean depth", "max", "full"], rows))
    out.append("")
    return "\n".join(out)


def write_report(report: ExperimentReport, out_root: str | Path) -> None:
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    write_atomic(out_root / "report.json", json.dumps(report_to_json(report), indent=2) + "\n")
    write_atomic(out_root / "report.txt", format_report_text(report))


# ------------------------------------------------------------ experiment

def _seed_passes(task: Task, seed: int, cfg: RunConfig, thresholds: Thresholds,
                 out_root: Path) -> tuple[list[RegimeLabel], list[SweepCell], list[CascadeRow]]:
    hyper = build_hyper(cfg, task)
    stage = "pass1 (train)"
    try:
        result = pass1_train(task, seed, cfg, thresholds, out_root)
        run_dir = run_dir_for(out_root, task.name, seed)
        stage = "pass2 (sweep)"
        cells = pass2_ksweep(run_dir, task, hyper, k_set=cfg.k_set, epsilon=cfg.epsilon,
                             adaptive_window=cfg.adaptive_window,
                             momentum_variant=cfg.momentum_variant,
                             quad_variant=cfg.quad_variant)
        write_sweep_csv(cells, run_dir / "sweep.csv")
        stage = "pass3 (cascade)"
        rows = pass3_cascades(run_dir, task, hyper, configs=cfg.cascades,
                              criterion=cfg.criterion, epsilon=cfg.epsilon,
                              adaptive_window=cfg.adaptive_window,
                              momentum_variant=cfg.momentum_variant,
                              quad_variant=cfg.quad_variant)
        write_cascade_rows(rows, run_dir / "cascades.jsonl")
    except Exception as exc:
        raise PassError(f"{stage} failed for seed {seed}: {exc}") from exc
    return result.labels, cells, rows


def run_experiment(cfg: RunConfig) -> ExperimentReport:
    """Passes 1-3 for every seed, then aggregate and write the report."""
    task = build_task(cfg)
    out_root = resolve_out_root(cfg)
    out_root.mkdir(parents=True, exist_ok=True)

    auto_calibrated = cfg.tau_low is None
    if auto_calibrated:
        thresholds = calibrate_thresholds(cfg, task)
    else:
        thresholds = Thresholds(tau_low=cfg.tau_low, tau_high=cfg.tau_high)

    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {seed: pool.submit(_seed_passes, task, seed, cfg, thresholds, out_root)
                       for seed in cfg.seeds}
            per_seed = {seed: fut.result() for seed, fut in futures.items()}
    else:
        per_seed = {seed: _seed_passes(task, seed, cfg, thresholds, out_root)
                    for seed in cfg.seeds}

    labels_by_seed = {seed: labels for seed, (labels, _, _) in per_seed.items()}
    cells = [c for seed in sorted(per_seed) for c in per_seed[seed][1]]
    cascade_rows = [r for seed in sorted(per_seed) for r in per_seed[seed][2]]

    effective = replace(cfg, lr=build_hyper(cfg, task).lr,
                        tau_low=thresholds.tau_low, tau_high=thresholds.tau_high,
                        out=str(out_root))
    report = aggregate(cells, cascade_rows, labels_by_seed, config_dict(effective))
    if auto_calibrated:
        report.notes.append(
            f"thresholds calibrated from seeds {list(cfg.calibration_seeds)}: "
            f"tau_low={thresholds.tau_low:.6f}, tau_high={thresholds.tau_high:.6f}")

    write_atomic(out_root / "config.txt", format_config(effective))
    write_report(report, out_root)
    return report
