"""
Reading and writing point clouds, diagrams, traces and configs.

Floats are written with repr so that files round-trip exactly. Malformed
input raises DataIOError carrying the path and the offending line or field.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from .complex_core import PointCloud
from .diagram_metrics import Matching
from .errors import DataIOError, InvalidInputError
from .optimizer import TraceRecord
from .persistence import PersistenceDiagram, PersistencePoint
from .topo_loss import GroundTruthDiagram

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRACE_COLUMNS = ("t", "G_t_Wt", "G_t_Wt1", "G_t1_Wt1", "L_supv", "L_topo", "L_reg", "eta")


def _format(value: float) -> str:
    return repr(float(value))


def _ensure_parent(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)


def _open_for_reading(path: Path):
    try:
        return open(path, newline="")
    except OSError as e:
        raise DataIOError(f"Cannot open file: {e.strerror}", path=str(path)) from e


def read_point_cloud(path: PathLike) -> PointCloud:
    """One point per row, comma separated, no header."""
    path = Path(path)
    rows: List[List[float]] = []
    with _open_for_reading(path) as handle:
        for line_number, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for column, cell in enumerate(row, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataIOError(
                        f"Not a number: {cell!r}", path=str(path), line=line_number, field=f"column {column}"
                    ) from None
                if not math.isfinite(value):
                    raise DataIOError(
                        "Coordinates must be finite", path=str(path), line=line_number, field=f"column {column}"
                    )
                values.append(value)
            if rows and len(values) != len(rows[0]):
                raise DataIOError(
                    f"Expected {len(rows[0])} columns, found {len(values)}", path=str(path), line=line_number
                )
            rows.append(values)
    if not rows:
        raise DataIOError("Point cloud file is empty", path=str(path))
    return PointCloud(np.array(rows, dtype=float))


def write_point_cloud(path: PathLike, points: Union[PointCloud, np.ndarray]) -> Path:
    path = Path(path)
    array = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=float)
    _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for row in np.atleast_2d(array):
            writer.writerow([_format(value) for value in row])
    return path


def write_labels(path: PathLike, labels: Sequence[int]) -> Path:
    path = Path(path)
    _ensure_parent(path)
    path.write_text("".join(f"{int(label)}\n" for label in labels))
    return path


def diagram_to_records(diagram: PersistenceDiagram) -> List[Dict[str, Any]]:
    return [
        {
            "dim": p.dim,
            "birth": p.birth,
            "death": p.death,
            "birth_simplex": p.birth_simplex,
            "death_simplex": p.death_simplex,
        }
        for p in diagram.sorted()
    ]


def diagram_from_records(records: Sequence[Dict[str, Any]], source: str = "<records>") -> PersistenceDiagram:
    points = []
    for index, record in enumerate(records):
        if not isinstance(record, dict):
            raise DataIOError("Diagram records must be objects", path=source, field=f"record {index}")
        missing = [name for name in ("dim", "birth", "death") if name not in record]
        if missing:
            raise DataIOError(f"Missing {', '.join(missing)}", path=source, field=f"record {index}")
        try:
            death = record["death"]
            point = PersistencePoint(
                dim=int(record["dim"]),
                birth=float(record["birth"]),
                death=None if death is None else float(death),
                birth_simplex=int(record.get("birth_simplex", -1)),
                death_simplex=None if record.get("death_simplex") is None else int(record["death_simplex"]),
            )
        except (TypeError, ValueError) as e:
            raise DataIOError(f"Invalid value: {e}", path=source, field=f"record {index}") from e
        if point.death is not None and point.death < point.birth:
            raise DataIOError("death precedes birth", path=source, field=f"record {index}")
        points.append(point)
    return PersistenceDiagram(tuple(points))


def _read_json(path: Path) -> Any:
    with _open_for_reading(path) as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as e:
            raise DataIOError(f"Malformed JSON: {e.msg}", path=str(path), line=e.lineno) from e


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    _ensure_parent(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")
    return path


def write_diagram(path: PathLike, diagram: PersistenceDiagram) -> Path:
    return write_json(path, {"points": diagram_to_records(diagram)})


def read_diagram(path: PathLike) -> PersistenceDiagram:
    path = Path(path)
    payload = _read_json(path)
    records = payload.get("points") if isinstance(payload, dict) else payload
    if not isinstance(records, list):
        raise DataIOError("Expected a list of points or an object with 'points'", path=str(path))
    return diagram_from_records(records, source=str(path))


def read_ground_truth(path: PathLike, hom_dim: int = 0) -> GroundTruthDiagram:
    """Ground truth from a diagram JSON file: its finite points in ``hom_dim``."""
    diagram = read_diagram(path)
    try:
        return GroundTruthDiagram.from_diagram(diagram, hom_dim)
    except InvalidInputError as e:
        raise DataIOError(str(e), path=str(path)) from e


def read_json_config(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    payload = _read_json(path)
    if not isinstance(payload, dict):
        raise DataIOError("Config file must hold a JSON object", path=str(path))
    return payload


def matching_to_dict(matching: Matching) -> Dict[str, Any]:
    return {
        "cost": matching.cost,
        "pairs": [
            {"source": pair.source, "target": pair.target, "cost": pair.cost}
            for pair in matching.pairs
        ],
    }


def write_trace(path: PathLike, records: Sequence[TraceRecord]) -> Path:
    path = Path(path)
    _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in records:
            writer.writerow(
                [r.t]
                + [_format(v) for v in (r.g_t_wt, r.g_t_wt1, r.g_t1_wt1, r.l_supv, r.l_topo, r.l_reg, r.eta)]
            )
    return path


def read_trace(path: PathLike) -> List[TraceRecord]:
    path = Path(path)
    records: List[TraceRecord] = []
    with _open_for_reading(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_COLUMNS:
            raise DataIOError(f"Expected header {','.join(TRACE_COLUMNS)}", path=str(path), line=1)
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACE_COLUMNS):
                raise DataIOError(
                    f"Expected {len(TRACE_COLUMNS)} columns, found {len(row)}", path=str(path), line=line_number
                )
            parsed: List[float] = []
            for name, cell in zip(TRACE_COLUMNS, row):
                try:
                    parsed.append(int(cell) if name == "t" else float(cell))
                except ValueError:
                    raise DataIOError(f"Not a number: {cell!r}", path=str(path), line=line_number, field=name) from None
            t, g_t_wt, g_t_wt1, g_t1_wt1, l_supv, l_topo, l_reg, eta = parsed
            records.append(TraceRecord(t, g_t_wt, g_t_wt1, g_t1_wt1, l_supv, l_topo, l_reg, eta))
    if not records:
        raise DataIOError("Trace file has no rows", path=str(path))
    return records


def write_checkpoint(path: PathLike, checkpoint: Dict[str, Any]) -> Path:
    return write_json(path, checkpoint)


def read_checkpoint(path: PathLike) -> Dict[str, Any]:
    return read_json_config(path)
