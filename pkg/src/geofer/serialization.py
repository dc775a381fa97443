"""Byte-reproducible ``.npz`` writing."""

import io
import zipfile

import numpy as np

# np.savez stamps entries with the current time; a fixed stamp keeps files byte-identical
_STAMP = (1980, 1, 1, 0, 0, 0)


def write_npz(target, arrays) -> None:
    """Write ``arrays`` (name -> array) as an uncompressed ``.npz`` to a path or binary file."""
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "wb") as fh:
            write_npz(fh, arrays)
        return
    with zipfile.ZipFile(target, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=_STAMP), buf.getvalue())
