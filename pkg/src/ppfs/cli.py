"""``ppfs`` command line: reduct, simulate and verify.

Exit codes: 0 success, 2 ingestion error, 3 configuration error, 4 protocol
abort, 5 verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone

from . import figures
from .eigen import NumericColumnError, distributed_eigen_selection, plaintext_selection
from .netsim import SimulationError, audit_transcript
from .oracle import forbidden_values, fuzz_campaign, scramble_fingerprints, verify_run
from .partition import (
    IngestionError,
    Mode,
    PartitionError,
    assign_rows,
    even_cuts,
    even_groups,
    load_assignment,
    load_csv,
    parse_cuts,
    parse_groups,
    split_horizontal,
    split_vertical,
)
from .protocols import distributed_quick_reduct
from .rough import EvaluationError, InvalidAttributeError, quick_reduct
from .smc import ProtocolParameterError

SCHEMA = "ppfs-report/1"
DEFAULT_SEED = 20240607

EXIT_OK, EXIT_INGEST, EXIT_CONFIG, EXIT_ABORT, EXIT_VERIFY = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    input: str | None
    class_column: str | None
    bins: int | None
    partition: str | None
    parties: int | None
    cuts: str | None
    groups: str | None
    assignment: str | None
    protocol: str
    delta: float
    seed: int
    out: str | None
    transcript: str | None
    audit_full: bool
    fuzz: int
    no_timestamp: bool
    figures: str | None
    plant_corruption: int | None

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        cfg = cls(**{f: getattr(ns, f, None) for f in cls.__dataclass_fields__})
        if cfg.seed is None or not 0 <= cfg.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if cfg.command in ("simulate", "verify") and cfg.input is not None:
            if cfg.partition is None:
                raise ConfigError(f"{cfg.command} needs --partition horizontal|vertical")
            if cfg.parties is not None and cfg.parties < 2:
                raise ConfigError("--parties must be >= 2")
        if cfg.command == "verify" and cfg.input is None and not cfg.fuzz:
            raise ConfigError("verify needs --input or --fuzz")
        if cfg.command != "verify" and cfg.input is None:
            raise ConfigError("--input is required")
        if cfg.protocol == "eigen" and cfg.command == "verify":
            raise ConfigError("verify only supports --protocol rsfs")
        return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="CSV file with a header row")
    common.add_argument("--class-column", help="decision column name or index (default: last)")
    common.add_argument("--bins", type=int, help="equal-width bins for continuous columns")
    common.add_argument("--protocol", choices=("rsfs", "eigen"), default="rsfs")
    common.add_argument("--delta", type=float, default=0.0, help="eigen threshold")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--out", help="write the JSON report here (default: stdout)")
    common.add_argument("--no-timestamp", action="store_true", help="omit timestamp and runtime from reports")
    common.add_argument("--figures", metavar="DIR", help="render PNG figures into DIR")

    dist = argparse.ArgumentParser(add_help=False)
    dist.add_argument("--partition", choices=("horizontal", "vertical"))
    dist.add_argument("--parties", type=int)
    dist.add_argument("--cuts", help="horizontal row counts, e.g. 4,3")
    dist.add_argument("--groups", help='vertical attribute groups, e.g. "Age|LEMS"')
    dist.add_argument("--assignment", help="JSON file of row-index lists (horizontal)")
    dist.add_argument("--transcript", help="write the message transcript as NDJSON")
    dist.add_argument("--audit-full", action="store_true", help="embed base64 payloads in the transcript")

    parser = _Parser(prog="ppfs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("reduct", parents=[common], help="centralized feature selection")
    sub.add_parser("simulate", parents=[common, dist], help="distributed feature selection")
    verify = sub.add_parser("verify", parents=[common, dist], help="check distributed runs against the oracle")
    verify.add_argument("--fuzz", type=int, default=0, help="also run N random cases")
    verify.add_argument("--plant-corruption", type=int, metavar="K", help=argparse.SUPPRESS)
    return parser


def _load(cfg: RunConfig):
    try:
        with open(cfg.input, "rb") as fh:
            return load_csv(fh, cfg.class_column, bins=cfg.bins, allow_continuous=cfg.protocol == "eigen")
    except OSError as exc:
        raise IngestionError(f"cannot read {cfg.input}: {exc.strerror}") from exc


def _split(cfg: RunConfig, table):
    mode = Mode(cfg.partition)
    if mode is Mode.HORIZONTAL:
        if cfg.groups:
            raise ConfigError("--groups applies to vertical partitions")
        if cfg.assignment:
            return assign_rows(table, load_assignment(cfg.assignment))
        cuts = parse_cuts(cfg.cuts) if cfg.cuts else even_cuts(table.size, cfg.parties or 2)
        if cfg.parties is not None and len(cuts) != cfg.parties:
            raise ConfigError(f"--cuts lists {len(cuts)} parties but --parties is {cfg.parties}")
        return split_horizontal(table, cuts)
    if cfg.cuts or cfg.assignment:
        raise ConfigError("--cuts/--assignment apply to horizontal partitions")
    groups = parse_groups(table, cfg.groups) if cfg.groups else even_groups(len(table.attributes), cfg.parties or 2)
    if cfg.parties is not None and len(groups) != cfg.parties:
        raise ConfigError(f"--groups lists {len(groups)} parties but --parties is {cfg.parties}")
    return split_vertical(table, groups)


def _reduct_section(result, attributes) -> dict:
    return {
        "selected_attributes": [attributes[a] for a in result.reduct],
        "gamma_trace": [str(g) for _, g in result.gamma_trace],
        "evaluations": result.evaluations,
        "note": result.note,
    }


def _rounds(result, attributes) -> list[dict]:
    out = []
    for r, cands in enumerate(result.rounds, start=1):
        picked = result.gamma_trace[r - 1][0] if r <= len(result.gamma_trace) else None
        out.append({
            "round": r,
            "candidates": [{"attribute": attributes[a], "gamma": str(g)} for a, g in cands],
            "selected": attributes[picked] if picked is not None else None,
        })
    return out


def _trace_figure(result, attributes, directory) -> str:
    rounds = [[(attributes[a], float(g.as_fraction())) for a, g in cands] for cands in result.rounds]
    selected = [attributes[a] for a, _ in result.gamma_trace]
    return figures.gamma_trace(rounds[: len(selected)], selected, directory)


def cmd_reduct(cfg: RunConfig) -> tuple[dict, int]:
    table = _load(cfg)
    report: dict = {"command": "reduct", "protocol": cfg.protocol, "objects": table.size, "attributes": list(table.attributes)}
    figs = []
    if cfg.protocol == "eigen":
        sel = plaintext_selection(table, cfg.delta)
        report["eigen"] = sel.as_dict()
        if cfg.figures:
            figs.append(figures.eigenvalues(sel, cfg.figures))
    else:
        result = quick_reduct(table)
        report.update(_reduct_section(result, table.attributes))
        report["rounds"] = _rounds(result, table.attributes)
        if cfg.figures:
            figs.append(_trace_figure(result, table.attributes, cfg.figures))
    if figs:
        report["figures"] = figs
    return report, EXIT_OK


def _write_transcript(cfg: RunConfig, transcript) -> None:
    if cfg.transcript:
        with open(cfg.transcript, "w", encoding="utf-8") as fh:
            fh.write(transcript.to_ndjson(full=cfg.audit_full))


def cmd_simulate(cfg: RunConfig) -> tuple[dict, int]:
    table = _load(cfg)
    partition, views = _split(cfg, table)
    report: dict = {
        "command": "simulate",
        "protocol": cfg.protocol,
        "seed": cfg.seed,
        "partition": partition.describe(),
    }
    figs = []
    if cfg.protocol == "eigen":
        run = distributed_eigen_selection(partition, views, cfg.delta, seed=cfg.seed)
        report["eigen"] = run.selection.as_dict()
        report["eigen"]["plaintext_kept_ranks"] = plaintext_selection(table, cfg.delta).kept
        transcript = run.transcript
        if cfg.figures:
            figs.append(figures.eigenvalues(run.selection, cfg.figures))
    else:
        run = distributed_quick_reduct(partition, views, seed=cfg.seed)
        report.update(_reduct_section(run.result, table.attributes))
        report["rounds"] = _rounds(run.result, table.attributes)
        transcript = run.transcript
        if cfg.figures:
            figs.append(_trace_figure(run.result, table.attributes, cfg.figures))
        if cfg.audit_full:
            report["audit"] = audit_transcript(
                transcript, [*forbidden_values(table), *run.harness.issued_secrets]
            ).as_dict()
    report["communication"] = {
        "per_party": {str(p): v for p, v in transcript.per_party().items()},
        **transcript.totals(),
    }
    if cfg.figures:
        figs.append(figures.party_traffic(transcript.per_party(), cfg.figures))
        report["figures"] = figs
    _write_transcript(cfg, transcript)
    return report, EXIT_OK


def cmd_verify(cfg: RunConfig) -> tuple[dict, int]:
    report: dict = {"command": "verify", "seed": cfg.seed}
    ok = True
    if cfg.input is not None:
        table = _load(cfg)
        partition, views = _split(cfg, table)
        tamper = scramble_fingerprints(cfg.plant_corruption) if cfg.plant_corruption is not None else None
        rep = verify_run(table, partition, views, seed=cfg.seed, tamper=tamper)
        report["run"] = rep.as_dict()
        ok = rep.passed
    if cfg.fuzz:
        summary = fuzz_campaign(cfg.fuzz, seed=cfg.seed)
        report["fuzz"] = summary.as_dict()
        ok = ok and summary.passed == summary.cases
    report["pass"] = ok
    return report, EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"reduct": cmd_reduct, "simulate": cmd_simulate, "verify": cmd_verify}


def run(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = RunConfig.from_args(ns)
        report, code = COMMANDS[cfg.command](cfg)
    except IngestionError as exc:
        return _fail(EXIT_INGEST, "ingestion error", exc)
    except (ConfigError, PartitionError, InvalidAttributeError, NumericColumnError, ProtocolParameterError) as exc:
        return _fail(EXIT_CONFIG, "configuration error", exc)
    except (SimulationError, EvaluationError) as exc:
        return _fail(EXIT_ABORT, "protocol abort", exc)
    report = {"schema": SCHEMA, **report}
    if not cfg.no_timestamp:
        report["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        report["runtime_ms"] = round((time.perf_counter() - started) * 1000, 3)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


def _fail(code: int, what: str, exc: Exception) -> int:
    print(f"ppfs: {what}: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))
