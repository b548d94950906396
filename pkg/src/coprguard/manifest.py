"""Dataset manifests: JSON lists of image files with optional ground-truth labels."""

import json
import os
from dataclasses import dataclass, field

from .errors import FormatError

LABELS = ("clean", "watermarked", "unknown")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    label: str | None = None


@dataclass
class DatasetManifest:
    """Ordered set of images. Paths resolve against root, falling back to the
    directory the manifest was loaded from."""

    entries: list[ManifestEntry]
    root: str | None = None
    base_dir: str = "."
    extra: dict = field(default_factory=dict)

    def resolve(self, entry: ManifestEntry) -> str:
        if os.path.isabs(entry.path):
            return entry.path
        if self.root is None:
            base = self.base_dir
        elif os.path.isabs(self.root):
            base = self.root
        else:
            base = os.path.join(self.base_dir, self.root)
        return os.path.normpath(os.path.join(base, entry.path))

    def paths(self) -> list[str]:
        return [self.resolve(e) for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def load_manifest(path: str, check_paths: bool = True) -> DatasetManifest:
    """Parse and validate a manifest file.

    Entry ids must be unique and labels, when present, must be one of
    clean/watermarked/unknown. With check_paths every referenced file must
    exist; the first missing one raises FileNotFoundError.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise FormatError(f"manifest {path!r} must be an object with an 'entries' list")
    root = doc.get("root")
    if root is not None and not isinstance(root, str):
        raise FormatError(f"manifest {path!r}: 'root' must be a string")
    entries = []
    seen = set()
    for i, raw in enumerate(doc["entries"]):
        if not isinstance(raw, dict) or "id" not in raw or "path" not in raw:
            raise FormatError(f"manifest {path!r}: entry {i} needs 'id' and 'path'")
        eid = str(raw["id"])
        if eid in seen:
            raise FormatError(f"manifest {path!r}: duplicate entry id {eid!r}")
        seen.add(eid)
        label = raw.get("label")
        if label is not None and label not in LABELS:
            raise FormatError(f"manifest {path!r}: entry {eid!r} has invalid label {label!r}")
        entries.append(ManifestEntry(id=eid, path=str(raw["path"]), label=label))
    extra = {k: v for k, v in doc.items() if k not in ("root", "entries")}
    man = DatasetManifest(entries=entries, root=root,
                          base_dir=os.path.dirname(os.path.abspath(path)), extra=extra)
    if check_paths:
        for e in man.entries:
            p = man.resolve(e)
            if not os.path.exists(p):
                raise FileNotFoundError(p)
    return man


def manifest_to_doc(man: DatasetManifest) -> dict:
    doc: dict = {}
    if man.root is not None:
        doc["root"] = man.root
    doc["entries"] = [
        {"id": e.id, "path": e.path, **({"label": e.label} if e.label is not None else {})}
        for e in man.entries
    ]
    doc.update(man.extra)
    return doc


def save_manifest(man: DatasetManifest, path: str) -> None:
    """Write a manifest atomically; reruns with the same content are
    byte-identical."""
    from .artifacts import pretty_json
    text = pretty_json(manifest_to_doc(man)) + "\n"
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
