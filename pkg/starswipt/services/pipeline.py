"""
Alternating outer loop and the Monte-Carlo experiment harness

Each outer iteration restores feasibility, runs the precoder step, then the RIS
step, and scores the resulting design exactly with the closed-form worst case.
Only designs that pass certification are kept. A realization runs every sweep
value in order, warm-starting from the previous value, and finally lets each
value adopt a neighbour's design when that design is certified and better.
Realizations run in a process pool; all files are written by the caller.
"""

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from starswipt.core.config import settings
from starswipt.core.exceptions import ConfigError, OptimizationFailure, StarSwiptError, SubproblemInfeasible
from starswipt.schemas.design import PrecoderSet, RISProfile
from starswipt.schemas.experiment import (
    AGGREGATE_HEADER,
    RECORD_HEADER,
    RIS_TRACE_HEADER,
    SPCA_TRACE_HEADER,
    ExperimentRecord,
    ExperimentResult,
    RISTraceRow,
    SPCATraceRow,
)
from starswipt.schemas.report import RateReport, format_value
from starswipt.schemas.scenario import ChannelSet, ScenarioConfig
from starswipt.services.oracle import Certificate, certify_design
from starswipt.services.precoder_opt import fipsa, spca_precoders
from starswipt.services.rates import worst_case_secrecy
from starswipt.services.ris_opt import sequential_rank_one
from starswipt.services.scenario import override_config, synthesize_channels

logger = logging.getLogger(__name__)

# Allowed decrease of the exact objective between outer iterations before a warning
OUTER_MONOTONE_TOL = 1e-3

Design = Tuple[PrecoderSet, RISProfile]


class ConvergenceTrace(BaseModel):
    """Per-iteration rows of every stage, tagged with the outer iteration"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    spca: List[Tuple[int, SPCATraceRow]] = []
    ris: List[Tuple[int, RISTraceRow]] = []
    outer: List[ExperimentRecord] = []


class _Candidate(BaseModel):
    """A certified design with its exact evaluation"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    precoders: PrecoderSet
    ris: RISProfile
    r_sec: float
    sum_rate: float
    energy_worst: float
    eps_ratio: float = 1.0
    rank_incomplete: bool = False

    def stamp(self, record: ExperimentRecord) -> ExperimentRecord:
        """Record rewritten to describe this design"""
        return record.model_copy(update={
            "r_sec": self.r_sec, "sum_rate": self.sum_rate, "energy_worst": self.energy_worst,
            "feasible": True, "eps_ratio": self.eps_ratio, "rank_incomplete": self.rank_incomplete,
        })


class _Run(BaseModel):
    """Outcome of the alternating loop from one start"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    best: _Candidate
    records: List[ExperimentRecord]
    converged: bool
    trace: ConvergenceTrace


def _score(pre: PrecoderSet, ris: RISProfile, channels: ChannelSet, cfg: ScenarioConfig
           ) -> Tuple[PrecoderSet, RateReport, Certificate]:
    """Allocate the exact common rate at this profile, evaluate and certify the design"""
    report = worst_case_secrecy(pre.with_common_rate(None), ris, channels, cfg.n_ball_samples, seed=cfg.seed)
    pre = pre.with_common_rate(report.r_c)
    certificate = certify_design(pre, ris, channels, cfg, seed=cfg.seed, reported_r_sec=report.r_sec)
    return pre, report, certificate


def fits(design: Design, channels: ChannelSet) -> bool:
    pre, ris = design
    return (pre.n_tx, pre.n_ir, pre.n_uer, ris.n_ris) == (channels.n_tx, channels.n_ir, channels.n_uer, channels.n_ris)


def evaluate_design(design: Design, channels: ChannelSet, cfg: ScenarioConfig) -> Optional[_Candidate]:
    """Certified evaluation of a given design, or None when it does not fit or fails certification"""
    pre, ris = design
    if not fits(design, channels):
        return None
    pre, report, certificate = _score(pre, ris, channels, cfg)
    if not certificate.passed:
        return None
    return _Candidate(precoders=pre, ris=ris, r_sec=report.r_sec, sum_rate=report.sum_rate,
                      energy_worst=report.energy_worst)


def _alternate_once(channels: ChannelSet, cfg: ScenarioConfig, sweep_value: float, realization: int,
                    rng: Optional[np.random.Generator], start: Optional[Design]) -> _Run:
    """One pass of the alternating loop from a random (rng) or given start"""
    previous: Optional[PrecoderSet] = None
    ris = RISProfile.uniform(channels.n_ris)
    if start is not None:
        previous, ris = start
    best: Optional[_Candidate] = None
    records: List[ExperimentRecord] = []
    trace = ConvergenceTrace()
    converged = False

    for outer in range(1, cfg.max_outer + 1):
        started = time.perf_counter()
        spca_rows: List[SPCATraceRow] = []
        ris_rows: List[RISTraceRow] = []
        try:
            state = fipsa(channels, ris, cfg, random_init=rng if previous is None else None,
                          start=previous, trace=spca_rows)
            if not state.feasible:
                raise SubproblemInfeasible("fipsa", state.iteration, "infeasible-after-restoration",
                                           f"indicator stopped at s={state.s}")
            pre, _, history = spca_precoders(channels, ris, cfg, state, trace=spca_rows)
        except SubproblemInfeasible as exc:
            if best is None:
                raise OptimizationFailure(outer, exc) from exc
            logger.warning("outer iteration %d: %s; keeping the best design so far", outer, exc.detail)
            break
        finally:
            trace.spca.extend((outer, row) for row in spca_rows)

        outcome = sequential_rank_one(channels, pre, pre.alpha, cfg, ris, trace=ris_rows)
        trace.ris.extend((outer, row) for row in ris_rows)
        candidate_ris = outcome.profile
        eps_ratio = outcome.history[-1].eps_ratio if outcome.history else 1.0

        scored, report, certificate = _score(pre, candidate_ris, channels, cfg)
        if not certificate.passed:
            logger.info("outer iteration %d: new RIS profile fails %s, keeping the previous one",
                        outer, certificate.failed)
            candidate_ris, eps_ratio = ris, 1.0
            scored, report, certificate = _score(pre, ris, channels, cfg)
        previous, ris = pre, candidate_ris

        if not certificate.passed:
            # Nothing certified this iteration: report the best design so far, if any
            logger.info("outer iteration %d: design fails %s", outer, certificate.failed)
            if best is None:
                continue
            current = best
        else:
            current = _Candidate(precoders=scored, ris=candidate_ris, r_sec=report.r_sec, sum_rate=report.sum_rate,
                                 energy_worst=report.energy_worst, eps_ratio=eps_ratio,
                                 rank_incomplete=outcome.incomplete and candidate_ris is outcome.profile)

        if records and current.r_sec < records[-1].r_sec - OUTER_MONOTONE_TOL:
            logger.warning("outer iteration %d: exact objective fell from %.6g to %.6g",
                           outer, records[-1].r_sec, current.r_sec)
        settled = bool(records) and abs(current.r_sec - records[-1].r_sec) < cfg.delta_outer
        record = ExperimentRecord(
            sweep_value=sweep_value,
            realization=realization,
            outer_iter=outer,
            r_sec=current.r_sec,
            sum_rate=current.sum_rate,
            energy_worst=current.energy_worst,
            feasible=True,
            eps_ratio=current.eps_ratio,
            wall_ms=1e3 * (time.perf_counter() - started),
            converged=settled,
            spca_iterations=len(history),
            ris_iterations=len(outcome.history),
            rank_incomplete=current.rank_incomplete,
        )
        records.append(record)
        trace.outer.append(record)
        logger.info("realization %d outer %d: r_sec=%.6g sum_rate=%.6g", realization, outer,
                    current.r_sec, current.sum_rate)

        if best is None or current.r_sec > best.r_sec:
            best = current
        if settled:
            converged = True
            break

    if best is None:
        raise OptimizationFailure(cfg.max_outer, SubproblemInfeasible(
            "certify", cfg.max_outer, "uncertified", "no outer iteration produced a certified design"))
    return _Run(best=best, records=records, converged=converged, trace=trace)


def _finish_records(run: _Run, max_outer: int) -> List[ExperimentRecord]:
    """Last record describes the kept design; pad to max_outer by carrying it forward"""
    records = list(run.records)
    if records[-1].r_sec < run.best.r_sec:
        records[-1] = run.best.stamp(records[-1])
    while records[-1].outer_iter < max_outer:
        records.append(records[-1].model_copy(update={
            "outer_iter": records[-1].outer_iter + 1, "wall_ms": 0.0, "converged": run.converged,
            "spca_iterations": 0, "ris_iterations": 0,
        }))
    return records


def alternate(channels: ChannelSet, cfg: ScenarioConfig, sweep_value: float = 0.0, realization: int = 0,
              trace: Optional[ConvergenceTrace] = None, warm_start: Optional[Design] = None
              ) -> Tuple[PrecoderSet, RISProfile, List[ExperimentRecord]]:
    """Alternate precoder and RIS steps from every start and keep the best certified design

    Starts are the warm start (when its dimensions fit the channels) followed by
    n_starts random ones. The records and trace are those of the winning start.
    """
    starts: List[Tuple[Optional[np.random.Generator], Optional[Design]]] = []
    if warm_start is not None and fits(warm_start, channels):
        starts.append((None, warm_start))
    starts += [(np.random.default_rng([cfg.seed, realization, 1 + s]), None) for s in range(cfg.n_starts)]

    chosen: Optional[_Run] = None
    failure: Optional[OptimizationFailure] = None
    for rng, start in starts:
        try:
            run = _alternate_once(channels, cfg, sweep_value, realization, rng, start)
        except OptimizationFailure as exc:
            logger.info("realization %d: start %s failed: %s", realization,
                        "warm" if start is not None else "random", exc.detail)
            failure = exc
            continue
        if chosen is None or run.best.r_sec > chosen.best.r_sec:
            chosen = run

    if chosen is None:
        raise failure
    if trace is not None:
        trace.spca.extend(chosen.trace.spca)
        trace.ris.extend(chosen.trace.ris)
        trace.outer.extend(chosen.trace.outer)
    return chosen.best.precoders, chosen.best.ris, _finish_records(chosen, cfg.max_outer)


def realization_config(cfg: ScenarioConfig, realization: int) -> ScenarioConfig:
    return cfg.with_updates(seed=cfg.seed + realization)


class RealizationOutcome(BaseModel):
    """Records (or the failure detail) of one realization at every sweep value"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    realization: int
    records: Dict[float, List[ExperimentRecord]] = {}
    errors: Dict[float, str] = {}


def _adopt_neighbours(points: List[Tuple[float, ScenarioConfig, ChannelSet]],
                      designs: Dict[float, Tuple[_Candidate, List[ExperimentRecord]]], realization: int) -> None:
    """Forward then backward pass: take a neighbour's design when it is certified here and better"""
    order = [value for value, _, _ in points if value in designs]
    lookup = {value: (run_cfg, channels) for value, run_cfg, channels in points}
    for sequence in (order, order[::-1]):
        for source, target in zip(sequence, sequence[1:]):
            run_cfg, channels = lookup[target]
            mine, records = designs[target]
            donor = designs[source][0]
            theirs = evaluate_design((donor.precoders, donor.ris), channels, run_cfg)
            if theirs is None or theirs.r_sec <= mine.r_sec:
                continue
            theirs = theirs.model_copy(update={"eps_ratio": donor.eps_ratio, "rank_incomplete": donor.rank_incomplete})
            logger.info("realization %d: value %s adopts the design found at %s (r_sec %.6g -> %.6g)",
                        realization, target, source, mine.r_sec, theirs.r_sec)
            records[-1] = theirs.stamp(records[-1])
            designs[target] = (theirs, records)


def _run_realization(configs: List[Tuple[float, ScenarioConfig]], realization: int) -> RealizationOutcome:
    """Worker body: every sweep value of one realization, warm-started in order; never raises"""
    outcome = RealizationOutcome(realization=realization)
    points: List[Tuple[float, ScenarioConfig, ChannelSet]] = []
    designs: Dict[float, Tuple[_Candidate, List[ExperimentRecord]]] = {}
    warm: Optional[Design] = None
    for value, value_cfg in configs:
        run_cfg = realization_config(value_cfg, realization)
        try:
            channels = synthesize_channels(run_cfg)
            points.append((value, run_cfg, channels))
            pre, ris, records = alternate(channels, run_cfg, sweep_value=value, realization=realization,
                                          warm_start=warm)
        except StarSwiptError as exc:
            outcome.errors[value] = exc.detail
            continue
        except Exception as exc:
            logger.exception("realization %d at %s: unexpected error", realization, value)
            outcome.errors[value] = f"{type(exc).__name__}: {exc}"
            continue
        warm = (pre, ris)
        final = records[-1]
        designs[value] = (_Candidate(precoders=pre, ris=ris, r_sec=final.r_sec, sum_rate=final.sum_rate,
                                     energy_worst=final.energy_worst, eps_ratio=final.eps_ratio,
                                     rank_incomplete=final.rank_incomplete), records)

    if len(designs) > 1:
        try:
            _adopt_neighbours(points, designs, realization)
        except Exception:
            logger.exception("realization %d: neighbour adoption failed, keeping the designs as found", realization)
    outcome.records = {value: records for value, (_, records) in designs.items()}
    return outcome


def sweep_configs(cfg: ScenarioConfig, sweep_key: Optional[str],
                  values: Optional[Sequence[float]]) -> List[Tuple[float, ScenarioConfig]]:
    if sweep_key is None:
        return [(0.0, cfg)]
    if sweep_key not in ScenarioConfig.model_fields:
        raise ConfigError(f"unknown sweep parameter '{sweep_key}'")
    if not values:
        raise ConfigError(f"no values given for sweep parameter '{sweep_key}'")
    return [(float(value), override_config(cfg, **{sweep_key: value})) for value in values]


def run_experiment(cfg: ScenarioConfig, sweep_key: Optional[str] = None, values: Optional[Sequence[float]] = None,
                   workers: Optional[int] = None) -> ExperimentResult:
    """n_realizations matched-seed realizations, each run over every sweep value"""
    configs = sweep_configs(cfg, sweep_key, values)
    realizations = list(range(cfg.n_realizations))
    workers = min(workers or settings.worker_count, len(realizations))
    logger.info("experiment: %d realizations x %d values over %d workers (sweep %s)",
                len(realizations), len(configs), workers, sweep_key or "-")

    outcomes: List[RealizationOutcome] = []
    if workers <= 1:
        outcomes = [_run_realization(configs, r) for r in realizations]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {r: pool.submit(_run_realization, configs, r) for r in realizations}
            for r, future in futures.items():
                try:
                    outcomes.append(future.result())
                except Exception as exc:
                    logger.exception("realization %d: worker crashed", r)
                    detail = f"{type(exc).__name__}: {exc}"
                    outcomes.append(RealizationOutcome(realization=r, errors={value: detail for value, _ in configs}))

    records: List[ExperimentRecord] = []
    failures: Dict[float, int] = {value: 0 for value, _ in configs}
    for outcome in outcomes:
        for value, error in outcome.errors.items():
            failures[value] += 1
            logger.error("realization %d at %s=%s failed: %s", outcome.realization, sweep_key or "-", value, error)
        for rows in outcome.records.values():
            records.extend(rows)
    records.sort(key=lambda r: (r.sweep_value, r.realization, r.outer_iter))
    return ExperimentResult(sweep_key=sweep_key, records=records, failures=failures)


def convergence_run(cfg: ScenarioConfig) -> ConvergenceTrace:
    """One realization with every per-iteration row kept"""
    trace = ConvergenceTrace()
    alternate(synthesize_channels(cfg), cfg, trace=trace)
    return trace


# Writers

def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _write_dat(path: Path, pairs: Sequence[Tuple[float, float]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{format_value(x)} {format_value(y)}\n" for x, y in pairs))
    return path


def write_records(result: ExperimentResult, out_dir: Union[str, Path]) -> Path:
    return _write_csv(Path(out_dir) / "records.csv", RECORD_HEADER, [r.to_csv_row() for r in result.records])


def write_aggregate(result: ExperimentResult, out_dir: Union[str, Path]) -> List[Path]:
    """aggregate.csv plus (x, mean) and (x, std) plot files for r_sec and sum rate"""
    out_dir = Path(out_dir)
    rows = result.aggregate()
    paths = [_write_csv(out_dir / "aggregate.csv", AGGREGATE_HEADER, [row.to_csv_row() for row in rows])]
    for metric in ("r_sec", "sum_rate"):
        paths.append(_write_dat(out_dir / f"{metric}.dat",
                                [(row.sweep_value, getattr(row, f"{metric}_mean")) for row in rows]))
        paths.append(_write_dat(out_dir / f"{metric}_std.dat",
                                [(row.sweep_value, getattr(row, f"{metric}_std")) for row in rows]))
    return paths


def write_traces(trace: ConvergenceTrace, out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    paths = [
        _write_csv(out_dir / "spca_trace.csv", ["outer_iter"] + SPCA_TRACE_HEADER,
                   [[str(outer)] + row.to_csv_row() for outer, row in trace.spca]),
        _write_csv(out_dir / "ris_trace.csv", ["outer_iter"] + RIS_TRACE_HEADER,
                   [[str(outer)] + row.to_csv_row() for outer, row in trace.ris]),
        _write_csv(out_dir / "outer_trace.csv", RECORD_HEADER, [r.to_csv_row() for r in trace.outer]),
    ]
    spca_points = [(i + 1, row.r_sec) for i, (_, row) in enumerate(r for r in trace.spca if r[1].stage == "spca")]
    paths.append(_write_dat(out_dir / "spca_convergence.dat", spca_points))
    paths.append(_write_dat(out_dir / "ris_convergence.dat",
                            [(i + 1, row.eps_ratio) for i, (_, row) in enumerate(trace.ris)]))
    paths.append(_write_dat(out_dir / "outer_convergence.dat", [(r.outer_iter, r.r_sec) for r in trace.outer]))
    return paths
