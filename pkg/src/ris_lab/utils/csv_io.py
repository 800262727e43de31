import csv
from numbers import Integral, Real
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence


def format_value(value: Any) -> str:  # Render a cell deterministically (floats round-trip exactly) !!!
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, Integral):
        return str(int(value))
    if isinstance(value, Real):
        return repr(float(value))
    return str(value)


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], meta: Mapping[str, Any] | None = None
) -> Path:
    """Write ``# key=value`` comment lines, a header row and the data rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={format_value(value)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Inverse of :func:`write_csv`: comment metadata plus rows keyed by header."""
    meta: dict[str, str] = {}
    body: list[str] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            else:
                body.append(line)
    return meta, list(csv.DictReader(body))


def read_csv_body(path: Path) -> str:
    """The file without its comment lines."""
    with Path(path).open(encoding="utf-8") as fh:
        return "".join(line for line in fh if not line.startswith("#"))
