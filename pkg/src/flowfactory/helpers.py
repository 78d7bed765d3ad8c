# ABOUTME: Shared helpers for flowfactory: JSON state files, hashing, and one-line report formatting.
# ABOUTME: Every module that persists or summarizes data goes through these functions.

import hashlib
import json
from pathlib import Path


class FactoryError(Exception):
    """Base error for the data factory.

    Subclasses attach the fields a caller needs to act on the failure
    (a path, a pixel, a key) and the CLI serializes them to stderr.
    """

    def fields(self):
        """Structured fields for the CLI error record."""
        return {}


def read_json(path):
    """Load a JSON file, letting missing files and parse errors propagate."""
    return json.loads(Path(path).read_text())


def save_json(path, data):
    """Save data as indented JSON with sorted keys, creating parent directories.

    Key order and separators are fixed so identical data always produces
    identical bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data) + "\n")


def dumps(data):
    return json.dumps(data, indent=2, sort_keys=True)


def sha256_file(path):
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def fraction(part, whole):
    """part / whole, or 0.0 for an empty whole."""
    return float(part) / whole if whole else 0.0


def oneline_sample(entry):
    """Ultra-compact single-line representation of a generated sample.

    Format: "[ 81.3%] pair-0007 conf 95.0% ssim 90.1% dc 84.2% occ 3.1%"
    """
    sample_id = entry.get("id", "?")
    retained = entry.get("retained_fraction", 0.0)
    per_mask = entry.get("per_mask", {})
    parts = [f"{name} {100.0 * value:.1f}%" for name, value in sorted(per_mask.items())]
    return f"[{100.0 * retained:5.1f}%] {sample_id} " + " ".join(parts)


def oneline_report(samples):
    """Render per-sample summaries as one line per sample."""
    return "\n".join(oneline_sample(s) for s in samples)


def format_table(rows, columns):
    """Fixed-order text table.

    Args:
        rows: list of dicts.
        columns: list of (key, header, format_spec) tuples; order is kept.
    """
    header = [h for _, h, _ in columns]
    body = []
    for row in rows:
        cells = []
        for key, _, spec in columns:
            value = row.get(key)
            if value is None:
                cells.append("-")
            elif spec:
                cells.append(format(value, spec))
            else:
                cells.append(str(value))
        body.append(cells)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(header, widths))]
    for cells in body:
        lines.append("  ".join(c.rjust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)
