"""
JSON and CSV formats for Kraus maps, controls, states, reports and trajectories.

Matrices are stored as {"re": [[...]], "im": [[...]]}. Floats go through
json's shortest round-trip repr, so values survive a write/read cycle
exactly.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from utils.errors import FileFormatError

PathLike = Union[str, Path]

TRAJECTORY_HEADER = ["t", "V", "dist_S"]


@dataclass
class KrausFile:
    """Parsed contents of a Kraus (or controls) JSON file."""

    dim: int
    ops: List[np.ndarray]
    name: Optional[str] = None
    basis_description: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"dim": self.dim, "ops": [matrix_to_json(m) for m in self.ops]}
        if self.name is not None:
            data["name"] = self.name
        if self.basis_description is not None:
            data["basis_description"] = self.basis_description
        data.update(self.extra)
        return data

    def digest(self) -> str:
        """SHA-256 of the canonical JSON text of the operator data."""
        payload = json.dumps(
            {"dim": self.dim, "ops": [matrix_to_json(m) for m in self.ops]},
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ------------------------------------------------------------------
# Matrices
# ------------------------------------------------------------------
def matrix_to_json(mat: np.ndarray) -> Dict[str, List[List[float]]]:
    arr = np.asarray(mat, dtype=np.complex128)
    return {"re": arr.real.tolist(), "im": arr.imag.tolist()}


def matrix_from_json(obj: Any, dim: Optional[int] = None, name: str = "matrix") -> np.ndarray:
    if not isinstance(obj, dict) or "re" not in obj or "im" not in obj:
        raise FileFormatError(f"{name}: expected an object with 're' and 'im' arrays")
    try:
        re = np.array(obj["re"], dtype=float)
        im = np.array(obj["im"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{name}: non-numeric entries ({exc})") from exc
    if re.ndim != 2 or re.shape != im.shape:
        raise FileFormatError(f"{name}: 're' and 'im' must be 2-D arrays of equal shape")
    if not (np.isfinite(re).all() and np.isfinite(im).all()):
        raise FileFormatError(f"{name}: entries must be finite numbers")
    if dim is not None and re.shape != (dim, dim):
        raise FileFormatError(f"{name}: expected {dim}x{dim}, got {re.shape[0]}x{re.shape[1]}")
    return re + 1j * im


def _read_json(path: PathLike) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FileFormatError(f"{path}: not UTF-8 text") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def _write_json(path: PathLike, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ------------------------------------------------------------------
# Kraus and controls files
# ------------------------------------------------------------------
def parse_kraus_file(path: PathLike) -> KrausFile:
    """Read a Kraus JSON file without checking completeness.

    Raises:
        FileFormatError: unreadable JSON or schema violation
    """
    data = _read_json(path)
    if not isinstance(data, dict):
        raise FileFormatError(f"{path}: top level must be an object")
    dim = data.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise FileFormatError(f"{path}: 'dim' must be a positive integer")
    ops = data.get("ops")
    if not isinstance(ops, list) or not ops:
        raise FileFormatError(f"{path}: 'ops' must be a nonempty list")

    matrices = [matrix_from_json(op, dim, f"ops[{k}]") for k, op in enumerate(ops)]
    known = {"dim", "ops", "name", "basis_description"}
    return KrausFile(
        dim=dim,
        ops=matrices,
        name=data.get("name"),
        basis_description=data.get("basis_description"),
        extra={k: v for k, v in data.items() if k not in known},
    )


def save_kraus_file(
    path: PathLike,
    ops: Sequence[np.ndarray],
    name: Optional[str] = None,
    basis_description: Optional[str] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    ops = [np.asarray(m, dtype=np.complex128) for m in ops]
    kraus_file = KrausFile(
        dim=ops[0].shape[0],
        ops=ops,
        name=name,
        basis_description=basis_description,
        extra=dict(extra or {}),
    )
    return _write_json(path, kraus_file.to_json())


def load_matrix_file(path: PathLike, key: str) -> np.ndarray:
    """A single matrix stored bare or under key (e.g. "basis", "rho")."""
    data = _read_json(path)
    if isinstance(data, dict) and key in data:
        data = data[key]
    return matrix_from_json(data, name=f"{path}:{key}")


def save_matrix_file(path: PathLike, key: str, mat: np.ndarray) -> Path:
    mat = np.asarray(mat, dtype=np.complex128)
    return _write_json(path, {"dim": mat.shape[0], key: matrix_to_json(mat)})


# ------------------------------------------------------------------
# Reports
# ------------------------------------------------------------------
def utc_timestamp(fixed: Optional[str] = None) -> str:
    """ISO-8601 UTC timestamp, or the fixed value when one is given."""
    if fixed:
        return fixed
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return matrix_to_json(value)
        return value.tolist()
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_report(path: PathLike, report: Dict[str, Any]) -> Path:
    return _write_json(path, _jsonable(report))


def load_report(path: PathLike) -> Dict[str, Any]:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise FileFormatError(f"{path}: report must be a JSON object")
    return data


# ------------------------------------------------------------------
# Trajectories
# ------------------------------------------------------------------
def write_trajectory_csv(
    path: PathLike,
    v_values: Sequence[float],
    distances: Sequence[float],
    outcomes: Optional[Sequence[int]] = None,
) -> Path:
    """CSV with header t,V,dist_S[,outcome]; t starts at 1."""
    if len(v_values) != len(distances) or (outcomes is not None and len(outcomes) != len(v_values)):
        raise ValueError("Trajectory columns have different lengths")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = TRAJECTORY_HEADER + (["outcome"] if outcomes is not None else [])
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for t, (v, d) in enumerate(zip(v_values, distances), start=1):
            row = [t, repr(float(v)), repr(float(d))]
            if outcomes is not None:
                row.append(int(outcomes[t - 1]))
            writer.writerow(row)
    return path


def read_trajectory_csv(path: PathLike) -> Dict[str, List[float]]:
    """Columns of a trajectory CSV keyed by header name."""
    try:
        with Path(path).open(encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if header[:3] != TRAJECTORY_HEADER:
                raise FileFormatError(f"{path}: unexpected header {header}")
            columns: Dict[str, List[float]] = {name: [] for name in header}
            for row in reader:
                for name, value in zip(header, row):
                    columns[name].append(float(value))
    except StopIteration as exc:
        raise FileFormatError(f"{path}: empty trajectory file") from exc
    return columns


# ------------------------------------------------------------------
# Bundles
# ------------------------------------------------------------------
class BundleWriter:
    """Writes the files of one analysis run into a directory."""

    def __init__(self, out_dir: PathLike):
        """
        Args:
            out_dir: target directory, created on first write
        """
        self.out_dir = Path(out_dir)
        self.written: List[Path] = []

    def _target(self, filename: str) -> Path:
        return self.out_dir / filename

    def save_kraus(self, filename: str, ops: Sequence[np.ndarray], **metadata: Any) -> Path:
        path = save_kraus_file(self._target(filename), ops, **metadata)
        self.written.append(path)
        return path

    def save_matrix(self, filename: str, key: str, mat: np.ndarray) -> Path:
        path = save_matrix_file(self._target(filename), key, mat)
        self.written.append(path)
        return path

    def save_report(self, filename: str, report: Dict[str, Any]) -> Path:
        path = write_report(self._target(filename), report)
        self.written.append(path)
        return path

    def save_trajectory(
        self,
        filename: str,
        v_values: Sequence[float],
        distances: Sequence[float],
        outcomes: Optional[Sequence[int]] = None,
    ) -> Path:
        path = write_trajectory_csv(self._target(filename), v_values, distances, outcomes)
        self.written.append(path)
        return path


def analysis_report(
    stability: Dict[str, Any],
    digest: str,
    tolerances: Dict[str, float],
    coupling_norms: Sequence[float],
    dim_s: int,
    timestamp: Optional[str] = None,
) -> Dict[str, Any]:
    """The AnalysisReport dict: a stability verdict plus provenance."""
    report = dict(stability)
    report.update(
        {
            "input_digest": digest,
            "tolerances": dict(tolerances),
            "coupling_norms": [float(x) for x in coupling_norms],
            "dim_s": int(dim_s),
            "generated_at": utc_timestamp(timestamp),
        }
    )
    return report
