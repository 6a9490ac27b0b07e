"""On-disk formats.

Matrices travel in a tiny self-describing binary format ("DLMAT1"): a
single ASCII header line ``DLMAT1 <rows> <cols>\\n`` followed by the matrix
entries as row-major little-endian float64.  The format is exact (no text
rounding), so write/read round-trips are bit-identical.

JSON and CSV emitters here are deterministic: keys are written in sorted
order and every float is rendered with 17 significant digits, which is
enough to round-trip IEEE double precision.  Identical inputs therefore
produce byte-identical files.
"""

import json
import numpy as np

from .errors import ValidationError

_MAGIC = b"DLMAT1"


def write_matrix(path, mat):
    """Write a 2-D float array to ``path`` in DLMAT1 format."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValidationError("io: DLMAT1 stores 2-D matrices, got ndim=%d" % mat.ndim)
    rows, cols = mat.shape
    header = b"%s %d %d\n" % (_MAGIC, rows, cols)
    body = np.ascontiguousarray(mat).astype("<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def read_matrix(path):
    """Read a DLMAT1 file back into a float64 array."""
    with open(path, "rb") as fh:
        header = fh.readline()
        body = fh.read()
    parts = header.split()
    if len(parts) != 3 or parts[0] != _MAGIC:
        raise ValidationError("io: %s does not start with a DLMAT1 header" % path)
    try:
        rows, cols = int(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError("io: malformed DLMAT1 header in %s" % path) from None
    if rows < 0 or cols < 0:
        raise ValidationError("io: negative dimensions in DLMAT1 header of %s" % path)
    expect = rows * cols * 8
    if len(body) != expect:
        raise ValidationError(
            "io: DLMAT1 payload of %s has %d bytes, header promises %d"
            % (path, len(body), expect)
        )
    flat = np.frombuffer(body, dtype="<f8")
    return flat.reshape(rows, cols).astype(np.float64, copy=True)


def format_float(x):
    """Render a float with 17 significant digits (exact double round-trip)."""
    if isinstance(x, (bool, np.bool_)):
        raise ValidationError("io: format_float does not take booleans")
    return "%.17g" % float(x)


def _render(obj, indent, level):
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return '"nan"'
        if np.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format_float(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _render(obj.tolist(), indent, level)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [_render(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(pad_in + it for it in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        keys = sorted(obj.keys())
        items = [
            "%s%s: %s" % (pad_in, json.dumps(str(k)), _render(obj[k], indent, level + 1))
            for k in keys
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise ValidationError("io: cannot serialize %r to JSON" % type(obj))


def dump_json(obj, path=None):
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""
    text = _render(obj, 2, 0) + "\n"
    if path is not None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text)
    return text


def dump_csv(header, rows, path=None):
    """Deterministic CSV with 17-significant-digit floats."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (bool, np.bool_)):
                cells.append("1" if v else "0")
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            elif isinstance(v, (float, np.floating)):
                cells.append(format_float(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text)
    return text
