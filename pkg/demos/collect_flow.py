"""
Walking the click-collection flow end to end
============================================

Stands up the collection service in-process, opens a session, steps
through the timed presentation phases for each task and exports the
finished batch as CSV.  A fake clock plays the role of real waiting.
"""

import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient
from PIL import Image

from clickbench.collect import CollectStore, build_app
from clickbench.dataset import ManifestEntry
from clickbench.imaging import save_mask

# twelve instances: a square object on a random background
root = Path(tempfile.mkdtemp(prefix="collect_demo_"))
rng = np.random.default_rng(5)
entries = []
for i in range(12):
    mask = np.zeros((48, 64), dtype=bool)
    mask[12:36, 20:44] = True
    save_mask(mask, root / f"m{i}.png")
    Image.fromarray(rng.integers(0, 255, (48, 64, 3), dtype=np.uint8)).save(root / f"i{i}.png")
    entries.append(ManifestEntry(
        id=f"obj{i}", gt_mask=root / f"m{i}.png", image=root / f"i{i}.png",
        description=f"the square number {i}",
    ))


class FakeClock:
    now = 0.0

    def __call__(self):
        return self.now


clock = FakeClock()
store = CollectStore(entries, display_mode="cutout", clock=clock)
client = TestClient(build_app(store))

session = client.post("/session", json={"device": "pc"}).json()
print(f"session {session['id']}: batch of {session['total']}")

while True:
    task = client.get(f"/session/{session['id']}/task").json()
    if task["done"]:
        break
    phases = task["phases"]
    total_ms = phases["image_ms"] + phases["target_ms"] + phases["locked_ms"]
    # the client watches image -> target -> locked image, then clicks
    clock.now += total_ms / 1000.0
    res = client.post(
        f"/task/{task['task_id']}/click",
        json={"x": 30, "y": 20, "click_at_ms": total_ms + 120},
    ).json()
    print(f"task {task['index']:2d} ({task['instance_id']}): "
          f"accepted={res['accepted']} valid={res['valid']}")

export = client.get("/export.csv").text
print(f"export: {len(export.strip().splitlines()) - 1} rows")
print(export.splitlines()[0])
print(export.splitlines()[1])
