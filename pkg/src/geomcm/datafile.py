"""Line-oriented dataset files.

Layout::

    #geomcm-dataset v1<TAB>d_T=32<TAB>d_I=48<TAB>classes=10
    id<TAB>x<TAB>y<TAB>T|I<TAB>label<TAB>v1,v2,...[<TAB>p1,p2,...]

``id`` and ``label`` may be empty. An empty id is replaced by the record's
ordinal (0-based, header and blank lines excluded). The optional last field
holds the semantic vector once a dataset has been embedded. Floats are
written with ``repr`` so a write/read cycle is lossless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from .model import Dataset, FeatureVector, GeoObject, GeoPoint, Modality, SemanticVector, validate_dataset

MAGIC = "#geomcm-dataset"
VERSION = "v1"


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ValueError):
    def __init__(self, violations):
        self.violations = violations
        head = "; ".join(f"id {v.object_id}: {v.reason}" for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"{len(violations)} invariant violation(s): {head}{more}")


def _fmt(v: float) -> str:
    return repr(float(v))


def format_dataset(ds: Dataset) -> str:
    header = [f"{MAGIC} {VERSION}"]
    for m, key in ((Modality.TEXT, "d_T"), (Modality.IMAGE, "d_I")):
        d = ds.dim(m)
        if d is not None:
            header.append(f"{key}={d}")
    if ds.class_count is not None:
        header.append(f"classes={ds.class_count}")
    lines = ["\t".join(header)]
    for o in ds.objects:
        fields = [
            str(o.id), _fmt(o.location[0]), _fmt(o.location[1]), o.feature.modality.value,
            "" if o.label is None else str(o.label),
            ",".join(_fmt(v) for v in o.feature.values),
        ]
        if o.semantic is not None:
            fields.append(",".join(_fmt(v) for v in o.semantic.probabilities))
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"


def write_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(format_dataset(ds))


def _float(token: str, line: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(line, f"bad {what} {token!r}") from None


def _vector(token: str, line: int, what: str) -> list:
    if not token:
        raise ParseError(line, f"empty {what}")
    return [_float(t, line, what) for t in token.split(",")]


def parse_dataset(text: str, validate: bool = True) -> Dataset:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise ParseError(1, f"missing {MAGIC!r} header")
    head = lines[0].split("\t")
    if head[0].split()[-1] != VERSION:
        raise ParseError(1, f"unsupported version in {head[0]!r}")
    dims: dict = {}
    class_count: Optional[int] = None
    for item in head[1:]:
        key, _, value = item.partition("=")
        try:
            if key == "d_T":
                dims[Modality.TEXT] = int(value)
            elif key == "d_I":
                dims[Modality.IMAGE] = int(value)
            elif key == "classes":
                class_count = int(value)
            else:
                raise ParseError(1, f"unknown header field {key!r}")
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(1, f"bad header value {item!r}") from None

    objects = []
    ordinal = 0
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        f = raw.split("\t")
        if len(f) not in (6, 7):
            raise ParseError(lineno, f"expected 6 or 7 tab-separated fields, got {len(f)}")
        try:
            oid = int(f[0]) if f[0] else ordinal
        except ValueError:
            raise ParseError(lineno, f"bad id {f[0]!r}") from None
        x = _float(f[1], lineno, "x coordinate")
        y = _float(f[2], lineno, "y coordinate")
        try:
            modality = Modality(f[3])
        except ValueError:
            raise ParseError(lineno, f"modality must be T or I, got {f[3]!r}") from None
        try:
            label = int(f[4]) if f[4] else None
        except ValueError:
            raise ParseError(lineno, f"bad label {f[4]!r}") from None
        values = _vector(f[5], lineno, "feature vector")
        want = dims.get(modality)
        if want is not None and len(values) != want:
            raise ParseError(lineno, f"feature vector has {len(values)} values, header declares {want}")
        semantic = None
        if len(f) == 7:
            probs = _vector(f[6], lineno, "semantic vector")
            if class_count is not None and len(probs) != class_count:
                raise ParseError(lineno, f"semantic vector has {len(probs)} values, header declares {class_count}")
            semantic = SemanticVector(probs)
        objects.append(GeoObject(oid, GeoPoint(x, y), FeatureVector(modality, values), semantic, label))
        ordinal += 1

    ds = Dataset(objects, dims, class_count)
    if validate:
        violations = validate_dataset(ds)
        if violations:
            raise ValidationError(violations)
    return ds


def read_dataset(path, validate: bool = True) -> Dataset:
    return parse_dataset(Path(path).read_text(), validate)
