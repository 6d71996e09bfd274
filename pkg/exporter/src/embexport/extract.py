"""Feature-extraction shim.

The exporter never touches model weights: whatever maps an input item to
a fixed-width float vector is injected as a callable, and each result is
written as one raw little-endian float32 file named by the item id,
ready for export's directory source.
"""

from pathlib import Path

import numpy as np

from .errors import JobError, WidthError


def demo_extract(items, extract, out_dir: str | Path, suffix: str = ".vec") -> list[Path]:
    """Apply extract to every (id, item) pair and write one vector file
    per item. items is a mapping or an iterable of (id, item) pairs."""
    pairs = list(items.items()) if hasattr(items, "items") else list(items)
    if not pairs:
        raise JobError("no items to extract")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    width = None
    seen: set[str] = set()
    written: list[Path] = []
    for sample_id, item in pairs:
        sample_id = str(sample_id)
        if not sample_id or sample_id != Path(sample_id).name:
            raise JobError(f"unusable sample id: {sample_id!r}")
        if sample_id in seen:
            raise JobError(f"duplicate sample id: {sample_id!r}")
        seen.add(sample_id)
        vec = np.asarray(extract(item))
        if vec.ndim != 1 or vec.size == 0:
            raise WidthError(
                f"{sample_id}: extractor must return a non-empty 1-D vector, "
                f"got shape {vec.shape}"
            )
        if width is None:
            width = vec.size
        elif vec.size != width:
            raise WidthError(
                f"{sample_id}: width drifted to {vec.size}, first item "
                f"had {width}"
            )
        path = out_dir / f"{sample_id}{suffix}"
        path.write_bytes(vec.astype("<f4").tobytes())
        written.append(path)
    return written
