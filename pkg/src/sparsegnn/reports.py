"""Plain-text CSV tables with ``key,value`` footer lines.

Used for tuning reports and training stats::

    k,t_trusted_ms,t_specialized_ms,speedup
    16,1.0000000000000000e+00,...
    best_k,32
    vlen,8

Data rows have a numeric first field; footer lines start with a key.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ParseError


def format_float(x: float) -> str:
    """17 significant digits: lossless for float64."""
    return f"{float(x):.16e}"


def write_table(path, header: list[str], rows, footer: list[tuple[str, object]]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row))
    for key, value in footer:
        lines.append(f"{key},{value}")
    Path(path).write_text("\n".join(lines) + "\n")


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_table(path, header: list[str]) -> tuple[list[tuple[int, list[str]]], list[tuple[int, str, str]]]:
    """Return ``(rows, footer)`` with 1-based line numbers attached."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=path) from None
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", path=path)
    if lines[0].strip() != ",".join(header):
        raise ParseError(f"expected header {','.join(header)!r}, got {lines[0].strip()!r}", 1, path)
    rows: list[tuple[int, list[str]]] = []
    footer: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        first, _, rest = line.partition(",")
        if _is_number(first):
            if footer:
                raise ParseError("data row after footer lines", lineno, path)
            fields = line.split(",")
            if len(fields) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(fields)}", lineno, path)
            rows.append((lineno, fields))
        else:
            if not rest and "," not in line:
                raise ParseError(f"footer line needs 'key,value', got {line!r}", lineno, path)
            footer.append((lineno, first, rest))
    return rows, footer
