"""
Report writers: aligned text ledgers, json-lines and csv
"""

import csv
import json
import math

FLOAT_FORMAT = ".16e"

CSV_COLUMNS = (
    "suite",
    "identity",
    "n",
    "field",
    "kind",
    "lhs",
    "rhs",
    "abs_residual",
    "rel_residual",
    "tolerance",
    "pass",
    "error_estimate",
    "seed",
    "quadrature",
    "terms",
    "note",
)


def format_float(x):
    """17 significant digits; non-finite values as JSON-compatible strings."""
    if math.isfinite(x):
        return format(x, FLOAT_FORMAT)
    return json.dumps(str(x))


def to_json(value):
    """
    Serialize with every float at 17 significant digits.

    Keys keep insertion order, so equal inputs give byte-identical text.
    """
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, dict):
        items = (f"{json.dumps(str(k))}: {to_json(v)}" for k, v in value.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(to_json(v) for v in value) + "]"
    if hasattr(value, "item"):
        return to_json(value.item())
    return json.dumps(str(value))


class ReportWriter:
    """
    Write the manifest and the report stream in one format.

    Args:
        stream: Text stream to write to
        output_format (str): text, json-lines or csv
    """

    def __init__(self, stream, output_format="text"):
        self.stream = stream
        self.output_format = output_format
        self._csv = None
        if output_format == "csv":
            self._csv = csv.writer(stream, lineterminator="\n")

    def write_manifest(self, manifest):
        if self.output_format == "json-lines":
            self.stream.write(to_json({"record": "manifest", **manifest}) + "\n")
        elif self.output_format == "csv":
            self.stream.write(f"# manifest {to_json(manifest)}\n")
            self._csv.writerow(CSV_COLUMNS)
        else:
            self.stream.write(
                f"rellich-lab {manifest['version']}  seed={manifest['seed']}  "
                f"suites={','.join(manifest['config']['suites'])}\n"
            )

    def write(self, report):
        record = report.as_record()
        if self.output_format == "json-lines":
            self.stream.write(to_json({"record": "report", **record}) + "\n")
        elif self.output_format == "csv":
            self._csv.writerow(self._csv_row(record))
        else:
            self.stream.write(self._text(record))

    @staticmethod
    def _csv_row(record):
        terms = ";".join(
            f"{label}={format_float(t['value'])}±{format_float(t['error'])}"
            for label, t in record["terms"].items()
        )
        row = []
        for column in CSV_COLUMNS:
            value = terms if column == "terms" else record[column]
            if isinstance(value, float):
                value = format_float(value)
            elif value is None:
                value = ""
            row.append(value)
        return row

    @staticmethod
    def _text(record):
        mark = "PASS" if record["pass"] else "FAIL"
        lines = [
            f"[{mark}] {record['suite']}/{record['identity']}  n={record['n']}  {record['field']}"
        ]
        width = max((len(label) for label in record["terms"]), default=0)
        for label, t in record["terms"].items():
            lines.append(f"    {label:<{width}}  {t['value']: .12e}  ± {t['error']:.2e}")
        lines.append(
            f"    lhs={record['lhs']:.12e}  rhs={record['rhs']:.12e}  "
            f"rel_residual={record['rel_residual']:.3e}  tol={record['tolerance']:.1e}"
        )
        if record["note"]:
            lines.append(f"    note: {record['note']}")
        return "\n".join(lines) + "\n"
