"""Persistent result formats: CSV tables, overlap binaries, run records,
and the run manifest.

All writers are deterministic: fixed column orders, 9-significant-digit
reals in CSV, canonical JSON for structured records, LF line endings.
Identical inputs produce byte-identical files.

Overlap binary layout (one file per design, little-endian):

    bytes 0..3   magic "OVLP"
    byte  4      format version (0x01)
    byte  5      K, the number of environments summed
    bytes 6..7   n, the weight-grid edge length (uint16 LE)
    bytes 8..    n*n cell bytes, row-major, each in 0..K
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coopt import Admission, CooptRunRecord
from .landscape import OverlapMatrix, SweepRow
from .optimizers import LineageLog, MutationEvent, TrainRecord

__all__ = [
    "OVLP_MAGIC",
    "overlap_to_bytes",
    "overlap_from_bytes",
    "write_overlap",
    "read_overlap",
    "overlap_filename",
    "write_metrics_csv",
    "read_metrics_csv",
    "write_training_csv",
    "read_training_csv",
    "write_coopt_record",
    "read_coopt_record",
    "write_lineage_log",
    "read_lineage_log",
    "RunManifest",
    "sha256_file",
]

OVLP_MAGIC = b"OVLP"
_OVLP_VERSION = 1


def _fmt(x: float) -> str:
    """Reals in CSV carry 9 significant digits."""
    return format(float(x), ".9g")


# --- overlap binaries ---

def overlap_to_bytes(o: OverlapMatrix) -> bytes:
    if not 0 <= o.k <= 255:
        raise ValueError("K must fit in one byte")
    if o.n > 0xFFFF:
        raise ValueError("matrix edge too large for the format")
    cells = np.ascontiguousarray(o.cells, dtype=np.uint8)
    return OVLP_MAGIC + bytes([_OVLP_VERSION, o.k]) + struct.pack("<H", o.n) + cells.tobytes()


def overlap_from_bytes(blob: bytes) -> OverlapMatrix:
    if blob[:4] != OVLP_MAGIC:
        raise ValueError("not an overlap file (bad magic)")
    version = blob[4]
    if version != _OVLP_VERSION:
        raise ValueError(f"unsupported overlap format version {version}")
    k = blob[5]
    (n,) = struct.unpack("<H", blob[6:8])
    body = blob[8:]
    if len(body) != n * n:
        raise ValueError(f"expected {n * n} cells, found {len(body)} bytes")
    cells = np.frombuffer(body, dtype=np.uint8).reshape(n, n).astype(np.int64)
    return OverlapMatrix(cells=cells, k=int(k))


def overlap_filename(design_index: int) -> str:
    return f"design_{design_index:06d}.ovlp"


def write_overlap(path: Path, o: OverlapMatrix) -> None:
    path.write_bytes(overlap_to_bytes(o))


def read_overlap(path: Path) -> OverlapMatrix:
    return overlap_from_bytes(path.read_bytes())


# --- metrics table ---

def metrics_header(k: int) -> list[str]:
    return (["design_index", "l1x", "l1y", "l2x", "l2y"]
            + [f"g{i}" for i in range(1, k + 1)] + ["m_l", "m_ci"])


def write_metrics_csv(path: Path, rows: list[SweepRow], k: int) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(metrics_header(k))
        for row in rows:
            d = row.design
            writer.writerow(
                [row.design_index, _fmt(d.l1[0]), _fmt(d.l1[1]),
                 _fmt(d.l2[0]), _fmt(d.l2[1])]
                + [str(c) for c in row.metrics.counts]
                + [_fmt(row.metrics.m_l), _fmt(row.metrics.m_ci)]
            )


def read_metrics_csv(path: Path) -> list[dict]:
    """Rows as dicts with numeric fields parsed."""
    out = []
    with open(path, newline="", encoding="utf-8") as handle:
        for record in csv.DictReader(handle):
            row = {"design_index": int(record["design_index"])}
            for key, value in record.items():
                if key == "design_index":
                    continue
                row[key] = int(value) if key.startswith("g") else float(value)
            out.append(row)
    return out


# --- training table ---

TRAINING_HEADER = ["design_index", "method", "seed",
                   "evals_to_full_success", "final_loss", "envs_solved"]


def write_training_csv(path: Path, records: list[TrainRecord]) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRAINING_HEADER)
        for r in records:
            evals = -1 if r.evals_to_full_success is None else r.evals_to_full_success
            writer.writerow([r.design_index, r.method, r.seed, evals,
                             _fmt(r.final_loss), r.envs_solved])


def read_training_csv(path: Path) -> list[dict]:
    out = []
    with open(path, newline="", encoding="utf-8") as handle:
        for record in csv.DictReader(handle):
            out.append({
                "design_index": int(record["design_index"]),
                "method": record["method"],
                "seed": int(record["seed"]),
                "evals_to_full_success": int(record["evals_to_full_success"]),
                "final_loss": float(record["final_loss"]),
                "envs_solved": int(record["envs_solved"]),
            })
    return out


# --- co-optimization run records (JSON lines) ---

def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def write_coopt_record(path: Path, record: CooptRunRecord) -> None:
    """One header line, one line per best-so-far checkpoint, one line per
    archive admission; admissions carry the genome and its DTW score."""
    lines = [_json_line({
        "type": "header",
        "arm": record.arm,
        "seed": record.seed,
        "budget": record.budget,
        "population": record.population,
        "evals_used": record.evals_used,
        "evals_to_full_success": record.evals_to_full_success,
        "best_loss": record.best_loss,
        "best_genome": list(record.best_genome),
    })]
    loss_at = dict(record.best_loss_curve)
    solved_at = dict(record.success_count_curve)
    best_loss = None
    solved = 0
    for e in sorted(set(loss_at) | set(solved_at)):
        best_loss = loss_at.get(e, best_loss)
        solved = solved_at.get(e, solved)
        lines.append(_json_line({
            "type": "checkpoint", "eval": e,
            "best_loss": best_loss, "envs_solved": solved,
        }))
    for adm in record.admissions:
        lines.append(_json_line({
            "type": "admission",
            "eval": adm.eval_index,
            "genome": list(adm.genome),
            "objectives": list(adm.objectives),
            "dtw": None if adm.dtw != adm.dtw else adm.dtw,  # NaN -> null
        }))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_coopt_record(path: Path) -> CooptRunRecord:
    header = None
    checkpoints = []
    admissions = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            obj = json.loads(line)
            if obj["type"] == "header":
                header = obj
            elif obj["type"] == "checkpoint":
                checkpoints.append(obj)
            elif obj["type"] == "admission":
                admissions.append(Admission(
                    eval_index=obj["eval"],
                    genome=tuple(obj["genome"]),
                    objectives=tuple(obj["objectives"]),
                    dtw=float("nan") if obj["dtw"] is None else obj["dtw"],
                ))
    if header is None:
        raise ValueError(f"{path}: missing header line")
    loss_curve = []
    success_curve = []
    best = None
    solved = 0
    for cp in checkpoints:
        if cp["best_loss"] is not None and cp["best_loss"] != best:
            best = cp["best_loss"]
            loss_curve.append((cp["eval"], best))
        if cp["envs_solved"] != solved:
            solved = cp["envs_solved"]
            success_curve.append((cp["eval"], solved))
    return CooptRunRecord(
        arm=header["arm"],
        seed=header["seed"],
        budget=header["budget"],
        population=header["population"],
        evals_used=header["evals_used"],
        best_loss=header["best_loss"],
        best_genome=tuple(header["best_genome"]),
        best_loss_curve=tuple(loss_curve),
        success_count_curve=tuple(success_curve),
        evals_to_full_success=header["evals_to_full_success"],
        admissions=tuple(admissions),
    )


# --- hill-climber lineage logs (JSON lines) ---

def write_lineage_log(path: Path, log: LineageLog) -> None:
    lines = [_json_line({
        "type": "header",
        "kind": log.kind, "pop": log.pop, "generations": log.generations,
        "mutation_scale": log.mutation_scale, "seed": log.seed, "k": log.k,
        "initial_distances": [list(r) for r in log.initial_distances],
        "initial_fitness": list(log.initial_fitness),
        "final_distances": [list(r) for r in log.final_distances],
        "final_fitness": list(log.final_fitness),
    })]
    for e in log.events:
        lines.append(_json_line({
            "type": "event",
            "climber": e.climber, "generation": e.generation,
            "parent_distances": list(e.parent_distances),
            "child_distances": list(e.child_distances),
            "delta": list(e.delta),
            "fitness_before": e.fitness_before,
            "fitness_after": e.fitness_after,
        }))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_lineage_log(path: Path) -> LineageLog:
    header = None
    events = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            obj = json.loads(line)
            if obj["type"] == "header":
                header = obj
            elif obj["type"] == "event":
                events.append(MutationEvent(
                    climber=obj["climber"], generation=obj["generation"],
                    parent_distances=tuple(obj["parent_distances"]),
                    child_distances=tuple(obj["child_distances"]),
                    delta=tuple(obj["delta"]),
                    fitness_before=obj["fitness_before"],
                    fitness_after=obj["fitness_after"],
                ))
    if header is None:
        raise ValueError(f"{path}: missing header line")
    return LineageLog(
        kind=header["kind"], pop=header["pop"],
        generations=header["generations"],
        mutation_scale=header["mutation_scale"],
        seed=header["seed"], k=header["k"],
        initial_distances=tuple(tuple(r) for r in header["initial_distances"]),
        initial_fitness=tuple(header["initial_fitness"]),
        final_distances=tuple(tuple(r) for r in header["final_distances"]),
        final_fitness=tuple(header["final_fitness"]),
        events=tuple(events),
    )


# --- manifest ---

def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Inventory of a run: resolved config, its hash, and every artifact
    with a checksum. Re-running the same config reproduces the checksums."""

    tool: str
    version: str
    subcommand: str
    config: dict
    config_sha256: str
    rng: str
    status: str = "incomplete"
    artifacts: list[dict] = field(default_factory=list)

    def add_artifact(self, out_dir: Path, path: Path) -> None:
        self.artifacts.append({
            "path": path.relative_to(out_dir).as_posix(),
            "bytes": path.stat().st_size,
            "sha256": sha256_file(path),
        })

    def write(self, out_dir: Path) -> Path:
        self.artifacts.sort(key=lambda a: a["path"])
        target = out_dir / "manifest.json"
        payload = {
            "tool": self.tool,
            "version": self.version,
            "subcommand": self.subcommand,
            "status": self.status,
            "config": self.config,
            "config_sha256": self.config_sha256,
            "rng": self.rng,
            "artifacts": self.artifacts,
        }
        target.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")
        return target
