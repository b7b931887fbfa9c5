"""Launch the collection service on synthetic data for client e2e runs.

Builds a small manifest of identical-geometry instances (a bright
square on a flat background), starts the service on a free port with
the phase durations given on the command line and prints one READY
line with the port and the mask geometry so the client knows where
valid and invalid clicks land.
"""

import argparse
import json
import socket
import tempfile
from pathlib import Path

import numpy as np
import uvicorn
from PIL import Image

from clickbench.collect import CollectStore, PhaseTimings, build_app
from clickbench.dataset import load_manifest

WIDTH, HEIGHT = 40, 30
BOX = (10, 5, 20, 15)  # object square, x0/y0 inclusive, x1/y1 exclusive


def build_tree(root: Path, count: int) -> Path:
    (root / "masks").mkdir()
    (root / "images").mkdir()
    x0, y0, x1, y1 = BOX
    instances = []
    for i in range(count):
        iid = f"inst{i:02d}"
        mask = np.zeros((HEIGHT, WIDTH), dtype=np.uint8)
        mask[y0:y1, x0:x1] = 255
        Image.fromarray(mask).save(root / "masks" / f"{iid}.png")
        image = np.full((HEIGHT, WIDTH, 3), 40 + 10 * (i % 8), dtype=np.uint8)
        image[y0:y1, x0:x1] = (220, 180, 40)
        Image.fromarray(image).save(root / "images" / f"{iid}.png")
        instances.append(
            {
                "id": iid,
                "gt_mask": f"masks/{iid}.png",
                "image": f"images/{iid}.png",
                "description": f"bright square {i}",
            }
        )
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({"instances": instances}), encoding="utf-8")
    return manifest


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--image-ms", type=int, default=300)
    parser.add_argument("--target-ms", type=int, default=400)
    parser.add_argument("--locked-ms", type=int, default=300)
    parser.add_argument("--mode", default="cutout")
    parser.add_argument("--instances", type=int, default=12)
    args = parser.parse_args()

    timings = PhaseTimings(
        image_ms=args.image_ms,
        target_ms=args.target_ms,
        target_text_ms=args.target_ms,
        locked_ms=args.locked_ms,
    )
    with tempfile.TemporaryDirectory() as tmp:
        manifest = build_tree(Path(tmp), args.instances)
        store = CollectStore(
            load_manifest(manifest), dataset="e2e", display_mode=args.mode, timings=timings
        )
        app = build_app(store)
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        print(
            "READY "
            + json.dumps(
                {
                    "port": port,
                    "width": WIDTH,
                    "height": HEIGHT,
                    "box": list(BOX),
                    "total_ms": timings.total_for(args.mode),
                }
            ),
            flush=True,
        )
        uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning", access_log=False)


if __name__ == "__main__":
    main()
