# %% [markdown]
# # Saving and loading models
#
# Models, quantized models and tensor bundles share one binary container: a
# JSON manifest followed by 64-byte aligned little-endian arrays.

# %%
import tempfile
from pathlib import Path

import numpy as np

from adderquant import store
from adderquant.errors import ContainerError
from adderquant.grouping import GroupingConfig
from adderquant.pipeline import calibrate, forward_quantized, quantize_model

model = store.toy_model(seed=3)
calib = store.toy_inputs(seed=4, n=4)
qm = quantize_model(model, calibrate(model, calib), 8, GroupingConfig(4))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.q.adq"
    store.save(qm, path)
    back = store.load(path)
    print("bytes on disk:", path.stat().st_size)
    print("identical outputs:", np.array_equal(forward_quantized(back, calib[0]), forward_quantized(qm, calib[0])))

    # the same content as a directory of raw arrays, for other tools
    store.save_directory(qm, Path(tmp) / "export")
    print(sorted(p.name for p in (Path(tmp) / "export").iterdir())[:4], "...")

# %% [markdown]
# Damaged files raise a ``ContainerError`` subclass that names the problem.

# %%
data = store.dumps(qm)
for label, bad in [("truncated", data[:-50]), ("bad magic", b"XXXXXXXX" + data[8:])]:
    try:
        store.loads(bad)
    except ContainerError as exc:
        print(f"{label}: {type(exc).__name__}: {exc}")
