"""Wire protocol for external segmenter processes.

A segmenter adapter is any executable that reads newline-delimited
JSON requests on stdin and writes one JSON response line per request
on stdout.  Request:

    {"id": str, "image": <path or base64 PNG>,
     "clicks": [{"x": int, "y": int, "positive": bool}, ...],
     "prev_mask": <RLE or null>}

Response: ``{"id": str, "mask": <RLE>}`` on success or
``{"id": str, "error": str}`` on failure.  RLE is the row-major
alternating run-length list starting with the zero run; the run
lengths are non-negative and sum to width*height.

Running this module (``python -m clickbench.adapter --radius R``)
starts a reference adapter wrapping the synthetic disk segmenter,
useful for conformance tests and as a porting template.
"""

from __future__ import annotations

import argparse
import base64
import io
import json
import os
import select
import shlex
import subprocess
import sys
import threading
import time

import numpy as np
from PIL import Image

from .imaging import as_mask


class AdapterError(RuntimeError):
    """Protocol, process or timeout failure of an external segmenter."""


def rle_encode(mask) -> list[int]:
    """Row-major alternating run lengths, starting with the zero run."""
    flat = as_mask(mask).ravel()
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs, shape: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`rle_encode` for a (height, width) mask."""
    h, w = shape
    runs = list(runs)
    if any((not isinstance(r, (int, np.integer))) or r < 0 for r in runs):
        raise AdapterError(f"RLE runs must be non-negative integers, got {runs!r}")
    if sum(runs) != h * w:
        raise AdapterError(f"RLE runs sum to {sum(runs)}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape(h, w)


class _Connection:
    """One adapter subprocess with line-framed JSON I/O."""

    def __init__(self, command: list[str], timeout: float):
        try:
            self.proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise AdapterError(f"cannot start adapter {command!r}: {exc}") from exc
        self.timeout = timeout
        self.buf = bytearray()
        self.seq = 0

    def request(self, payload: dict) -> dict:
        self.seq += 1
        payload = dict(payload, id=f"r{self.seq}")
        line = json.dumps(payload, separators=(",", ":")) + "\n"
        try:
            self.proc.stdin.write(line.encode())
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise AdapterError(f"adapter closed stdin: {exc}") from exc
        response = self._read_response()
        if response.get("id") != payload["id"]:
            raise AdapterError(
                f"response id {response.get('id')!r} does not match {payload['id']!r}"
            )
        return response

    def _read_response(self) -> dict:
        deadline = time.monotonic() + self.timeout
        fd = self.proc.stdout.fileno()
        while True:
            nl = self.buf.find(b"\n")
            if nl >= 0:
                raw = bytes(self.buf[:nl])
                del self.buf[:nl + 1]
                try:
                    parsed = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise AdapterError(f"adapter sent invalid JSON: {exc}") from exc
                if not isinstance(parsed, dict):
                    raise AdapterError("adapter response must be a JSON object")
                return parsed
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise AdapterError(f"adapter response timed out after {self.timeout}s")
            ready, _, _ = select.select([fd], [], [], min(remaining, 0.5))
            if ready:
                chunk = os.read(fd, 1 << 16)
                if not chunk:
                    raise AdapterError("adapter process closed its output")
                self.buf.extend(chunk)

    def close(self):
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class AdapterSegmenter:
    """Segmenter backed by an external adapter process.

    Each calling thread lazily spawns and owns its own connection, so
    the harness worker pool never interleaves requests on one pipe.
    Instances without an image file are sent as a base64 black PNG of
    the mask dimensions (enough for geometry-only adapters).
    """

    def __init__(self, command, timeout: float = 60.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._local = threading.local()
        self._all: list[_Connection] = []
        self._lock = threading.Lock()

    def _connection(self) -> _Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = _Connection(self.command, self.timeout)
            self._local.conn = conn
            with self._lock:
                self._all.append(conn)
        return conn

    def probe(self):
        """Spawn the calling thread's connection now; raises AdapterError."""
        self._connection()

    def __call__(self, instance, clicks, prev_mask) -> np.ndarray:
        gt_shape = instance.gt.shape
        payload = {
            "image": self._image_field(instance),
            "clicks": [
                {"x": int(c.x), "y": int(c.y), "positive": c.polarity == "positive"}
                for c in clicks
            ],
            "prev_mask": None if prev_mask is None else rle_encode(prev_mask),
        }
        response = self._connection().request(payload)
        if "error" in response:
            raise AdapterError(f"adapter reported: {response['error']}")
        if "mask" not in response:
            raise AdapterError("adapter response carries neither mask nor error")
        return rle_decode(response["mask"], gt_shape)

    @staticmethod
    def _image_field(instance) -> str:
        if instance.image_path:
            return instance.image_path
        h, w = instance.gt.shape
        img = Image.new("RGB", (w, h))
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")

    def close(self):
        with self._lock:
            conns, self._all = self._all, []
        for conn in conns:
            conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def decode_image_field(image: str) -> Image.Image:
    """Resolve the wire ``image`` field: base64 PNG first, else a path."""
    try:
        raw = base64.b64decode(image, validate=True)
    except (ValueError, TypeError):
        raw = None
    if raw is not None and raw[:8] == b"\x89PNG\r\n\x1a\n":
        return Image.open(io.BytesIO(raw))
    return Image.open(image)


def main(argv=None) -> int:
    """Reference adapter: disk segmenter behind the wire protocol."""
    parser = argparse.ArgumentParser(
        description="Reference segmenter adapter painting fixed-radius disks."
    )
    parser.add_argument("--radius", type=float, default=12.0)
    args = parser.parse_args(argv)

    from .clicksim import Click
    from .harness import disk_segmenter

    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        try:
            with decode_image_field(req["image"]) as img:
                w, h = img.size
            clicks = [
                Click(
                    x=c["x"], y=c["y"],
                    polarity="positive" if c["positive"] else "negative",
                )
                for c in req["clicks"]
            ]
            mask = disk_segmenter(clicks, (h, w), args.radius)
            response = {"id": req["id"], "mask": rle_encode(mask)}
        except Exception as exc:  # report, never crash the loop
            response = {"id": req.get("id", ""), "error": str(exc)}
        sys.stdout.write(json.dumps(response, separators=(",", ":")) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
