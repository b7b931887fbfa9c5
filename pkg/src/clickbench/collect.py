"""Timed click-collection service.

Participants open a session, receive a batch of 10 unique instances
and, per instance, walk a fixed presentation flow: the full image
(1500 ms), the target rendered in a display mode (2000 ms, text 2500),
the image again with input locked (1500 ms), then one click.  The
service checks the client's declared click time against that timeline,
rejects locked-phase clicks, validates accepted clicks against the
object mask and exports only batches with at least 7 of 10 valid
clicks.

Timing enforcement is client-declared plus a server plausibility
check: the click must arrive no earlier than the summed phase
durations minus 250 ms of network slack after the task was first
issued.  Browsers cannot be trusted for hard real-time, so both checks
are advisory rather than exact.
"""

from __future__ import annotations

import io
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field
from scipy import ndimage

from .dataset import (
    CSV_COLUMNS,
    ClickRecord,
    validate_batch,
    validate_click,
    write_clicks_csv,
)
from .imaging import as_mask, load_mask

BATCH_SIZE = 10
IMAGE_MS = 1500
TARGET_MS = 2000
TARGET_TEXT_MS = 2500
LOCKED_MS = 1500
SLACK_MS = 250

DISPLAY_MODES = ("text", "cutout", "shifted_cutout", "silhouette", "highlight")
GRAY = (128, 128, 128)
HIGHLIGHT_COLOR = (0, 255, 0)


class CollectError(Exception):
    """Base class for service-level failures."""


class UnknownResourceError(CollectError):
    """Session, task or instance id does not exist."""


class ConflictError(CollectError):
    """Duplicate submission, exhausted store or missing description."""


class OutOfFrameError(CollectError):
    """Click coordinates outside the instance's natural resolution."""


@dataclass(frozen=True)
class PhaseTimings:
    """Presentation phase durations in milliseconds."""

    image_ms: int = IMAGE_MS
    target_ms: int = TARGET_MS
    target_text_ms: int = TARGET_TEXT_MS
    locked_ms: int = LOCKED_MS

    def target_for(self, mode: str) -> int:
        return self.target_text_ms if mode == "text" else self.target_ms

    def total_for(self, mode: str) -> int:
        return self.image_ms + self.target_for(mode) + self.locked_ms


def render_target(image, mask, mode: str, description: str | None = None):
    """Render the target stimulus for one display mode.

    Returns an RGB uint8 array for the image modes and the description
    string for ``text``.  ``image`` may be None for ``silhouette``,
    which needs only the mask.
    """
    mask = as_mask(mask)
    if mode == "text":
        if not description:
            raise ConflictError("missing-description")
        return description
    if mode == "silhouette":
        out = np.zeros(mask.shape + (3,), dtype=np.uint8)
        out[mask] = 255
        return out
    if mode not in DISPLAY_MODES:
        raise ValueError(f"display mode must be one of {DISPLAY_MODES}, got {mode!r}")
    image = np.asarray(image, dtype=np.uint8)
    if image.shape[:2] != mask.shape:
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape} dims differ")
    if mode == "cutout":
        out = np.empty_like(image)
        out[:] = GRAY
        out[mask] = image[mask]
        return out
    if mode == "shifted_cutout":
        out = np.empty_like(image)
        out[:] = GRAY
        ys, xs = np.nonzero(mask)
        out[ys - ys.min(), xs - xs.min()] = image[ys, xs]
        return out
    # highlight: inner contour of the mask drawn over the original
    out = image.copy()
    contour = mask & ~ndimage.binary_erosion(mask)
    out[contour] = HIGHLIGHT_COLOR
    return out


@dataclass
class _Task:
    id: str
    session_id: str
    instance_id: str
    index: int
    issued_at: float | None = None
    completed: bool = False
    record: ClickRecord | None = None
    valid: bool | None = None


@dataclass
class _Session:
    id: str
    device: str
    created_at: float
    tasks: list = field(default_factory=list)
    batch_valid: bool | None = None

    @property
    def complete(self) -> bool:
        return all(t.completed for t in self.tasks)


class CollectStore:
    """In-memory collection state plus an append-only CSV journal.

    ``entries`` are manifest entries (see dataset.load_manifest); the
    instance id doubles as image and object stem in exported records.
    ``clock`` must be a monotonic float-second source; tests inject a
    fake one so phase checks need no real waiting.
    """

    def __init__(
        self,
        entries,
        dataset: str = "collected",
        display_mode: str = "cutout",
        diag_fraction: float = 0.01,
        journal_path=None,
        clock=time.monotonic,
        timings: PhaseTimings = PhaseTimings(),
    ):
        if display_mode not in DISPLAY_MODES:
            raise ValueError(f"display mode must be one of {DISPLAY_MODES}, got {display_mode!r}")
        entries = list(entries)
        self.entries = {e.id: e for e in entries}
        if len(self.entries) < len(entries):
            raise ValueError("duplicate instance ids")
        self.dataset = dataset
        self.display_mode = display_mode
        self.diag_fraction = diag_fraction
        self.clock = clock
        self.timings = timings
        self._order = [e.id for e in entries]
        self._assign_counts = {iid: 0 for iid in self._order}
        self._sessions: dict[str, _Session] = {}
        self._tasks: dict[str, _Task] = {}
        self._masks: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._started = self.clock()
        self._journal = None
        if journal_path is not None:
            journal_path = Path(journal_path)
            fresh = not (journal_path.exists() and journal_path.stat().st_size)
            self._journal = open(journal_path, "a", newline="", encoding="utf-8")
            if fresh:
                self._journal.write(
                    ",".join(("session", "received_ms") + CSV_COLUMNS + ("valid",)) + "\n"
                )
                self._journal.flush()

    # -- instance data ----------------------------------------------------

    def mask(self, instance_id: str) -> np.ndarray:
        if instance_id not in self.entries:
            raise UnknownResourceError(f"unknown instance {instance_id!r}")
        if instance_id not in self._masks:
            self._masks[instance_id] = load_mask(self.entries[instance_id].gt_mask)
        return self._masks[instance_id]

    def image(self, instance_id: str) -> np.ndarray:
        entry = self.entries.get(instance_id)
        if entry is None:
            raise UnknownResourceError(f"unknown instance {instance_id!r}")
        if entry.image is None:
            raise UnknownResourceError(f"instance {instance_id!r} has no image")
        with Image.open(entry.image) as img:
            arr = np.asarray(img.convert("RGB"))
        if arr.shape[:2] != self.mask(instance_id).shape:
            raise ValueError(f"instance {instance_id!r}: image and mask dims differ")
        return arr

    # -- sessions and tasks ------------------------------------------------

    def create_session(self, device: str) -> _Session:
        if device not in ("pc", "mobile"):
            raise ValueError(f"device must be pc or mobile, got {device!r}")
        with self._lock:
            if len(self._order) < BATCH_SIZE:
                raise ConflictError(
                    f"need at least {BATCH_SIZE} instances, store has {len(self._order)}"
                )
            # least-assigned first keeps coverage balanced across sessions
            chosen = sorted(
                self._order, key=lambda iid: (self._assign_counts[iid], self._order.index(iid))
            )[:BATCH_SIZE]
            chosen.sort(key=self._order.index)
            session = _Session(
                id=secrets.token_hex(8), device=device, created_at=time.time()
            )
            for index, iid in enumerate(chosen):
                self._assign_counts[iid] += 1
                task = _Task(
                    id=secrets.token_hex(8),
                    session_id=session.id,
                    instance_id=iid,
                    index=index,
                )
                session.tasks.append(task)
                self._tasks[task.id] = task
            self._sessions[session.id] = session
            return session

    def session(self, session_id: str) -> _Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownResourceError(f"unknown session {session_id!r}") from None

    def task(self, task_id: str) -> _Task:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise UnknownResourceError(f"unknown task {task_id!r}") from None

    def next_task(self, session_id: str) -> _Task | None:
        """The first unfinished task, stamped with its first issue time."""
        session = self.session(session_id)
        with self._lock:
            for task in session.tasks:
                if not task.completed:
                    if task.issued_at is None:
                        task.issued_at = self.clock()
                    return task
        return None

    def task_view(self, task: _Task) -> dict:
        entry = self.entries[task.instance_id]
        h, w = self.mask(task.instance_id).shape
        return {
            "task_id": task.id,
            "instance_id": task.instance_id,
            "index": task.index,
            "total": BATCH_SIZE,
            "mode": self.display_mode,
            "width": w,
            "height": h,
            "description": entry.description,
            "phases": {
                "image_ms": self.timings.image_ms,
                "target_ms": self.timings.target_for(self.display_mode),
                "locked_ms": self.timings.locked_ms,
            },
        }

    # -- click intake --------------------------------------------------

    def submit_click(self, task_id: str, x: int, y: int, click_at_ms: float) -> dict:
        task = self.task(task_id)
        session = self.session(task.session_id)
        mask = self.mask(task.instance_id)
        h, w = mask.shape
        if not (0 <= x < w and 0 <= y < h):
            raise OutOfFrameError(f"click ({x}, {y}) outside natural resolution {w}x{h}")
        with self._lock:
            if task.completed:
                raise ConflictError(f"task {task_id!r} already has a click")
            if task.issued_at is None:
                raise ConflictError(f"task {task_id!r} was never issued")
            total_ms = self.timings.total_for(self.display_mode)
            if click_at_ms < total_ms:
                return self._rejection(session, "locked-phase")
            elapsed_ms = (self.clock() - task.issued_at) * 1000.0
            if elapsed_ms < total_ms - SLACK_MS:
                return self._rejection(session, "too-early")
            valid = validate_click((x, y), mask, self.diag_fraction)
            record = ClickRecord(
                dataset=self.dataset,
                image_stem=task.instance_id,
                object_stem=task.instance_id,
                model_type="",
                click_type="first",
                full_stem=f"{self.dataset}/{task.instance_id}",
                device=session.device,
                x=x,
                y=y,
                w=w,
                h=h,
            )
            task.completed = True
            task.record = record
            task.valid = valid
            if session.complete:
                session.batch_valid = validate_batch([t.valid for t in session.tasks])
            self._journal_write(session, task)
            return {
                "accepted": True,
                "valid": valid,
                "batch_complete": session.complete,
                "batch_valid": session.batch_valid,
            }

    def _rejection(self, session: _Session, reason: str) -> dict:
        return {
            "accepted": False,
            "reason": reason,
            "batch_complete": session.complete,
            "batch_valid": session.batch_valid,
        }

    def _journal_write(self, session: _Session, task: _Task):
        if self._journal is None:
            return
        received_ms = int(round((self.clock() - self._started) * 1000.0))
        row = [session.id, received_ms]
        row += [getattr(task.record, name) for name in CSV_COLUMNS]
        row.append(task.valid)
        self._journal.write(",".join(str(v) for v in row) + "\n")
        self._journal.flush()

    # -- export ------------------------------------------------------------

    def export_records(self) -> list[ClickRecord]:
        """Accepted clicks of complete, valid batches in submission order."""
        with self._lock:
            sessions = list(self._sessions.values())
        records = []
        for session in sessions:
            if session.complete and session.batch_valid:
                records.extend(t.record for t in session.tasks)
        return records

    def export_csv(self) -> str:
        buf = io.StringIO()
        write_clicks_csv(self.export_records(), buf)
        return buf.getvalue()

    def close(self):
        if self._journal is not None:
            self._journal.close()
            self._journal = None


def png_bytes(array) -> bytes:
    arr = np.asarray(array, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


class SessionBody(BaseModel):
    device: str = Field(pattern="^(pc|mobile)$")


class ClickBody(BaseModel):
    x: int = Field(ge=0)
    y: int = Field(ge=0)
    click_at_ms: float = Field(ge=0)


def build_app(store: CollectStore):
    """FastAPI wiring over a CollectStore."""
    from fastapi import FastAPI, HTTPException, Query, Response

    app = FastAPI(title="click collection service")

    def _guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UnknownResourceError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except OutOfFrameError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None

    @app.post("/session")
    def create_session(body: SessionBody):
        session = _guard(store.create_session, body.device)
        return {"id": session.id, "device": session.device, "total": BATCH_SIZE}

    @app.get("/session/{session_id}/task")
    def next_task(session_id: str):
        task = _guard(store.next_task, session_id)
        if task is None:
            return {"done": True, "total": BATCH_SIZE}
        return {"done": False, **store.task_view(task)}

    @app.get("/task/{task_id}/image")
    def task_image(task_id: str):
        task = _guard(store.task, task_id)
        image = _guard(store.image, task.instance_id)
        return Response(content=png_bytes(image), media_type="image/png")

    @app.get("/task/{task_id}/target")
    def task_target(task_id: str, mode: str | None = Query(default=None)):
        task = _guard(store.task, task_id)
        mode = mode or store.display_mode
        if mode not in DISPLAY_MODES:
            raise HTTPException(
                status_code=422, detail=f"mode must be one of {DISPLAY_MODES}"
            )
        entry = store.entries[task.instance_id]
        mask = _guard(store.mask, task.instance_id)
        image = None
        if mode in ("cutout", "shifted_cutout", "highlight"):
            image = _guard(store.image, task.instance_id)
        rendered = _guard(render_target, image, mask, mode, entry.description)
        if mode == "text":
            return {"description": rendered}
        return Response(content=png_bytes(rendered), media_type="image/png")

    @app.post("/task/{task_id}/click")
    def submit_click(task_id: str, body: ClickBody):
        return _guard(store.submit_click, task_id, body.x, body.y, body.click_at_ms)

    @app.get("/export.csv")
    def export_csv():
        return Response(content=store.export_csv(), media_type="text/csv")

    return app
