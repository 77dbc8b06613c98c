"""HTTP labeling service: a human oracle answers active-learning queries.

The service wraps one ActiveLearningRun. Reads (status, queries, report)
are served from a snapshot refreshed under a single lock; label
submissions mutate the run under that lock. When a round's quota is
filled the service retrains on a background worker; while training it
reports awaiting_labels=false and rejects submissions with a conflict.

Endpoints (JSON unless noted):
    GET  /api/status                 run counters and accuracies
    GET  /api/queries?limit=K        pending queries with base64 pixels
    POST /api/labels {id, label}     answer one query
    GET  /api/report                 round reports as CSV
Status codes: 200 success, 400 validation, 404 unknown id, 409 conflict.
"""

from __future__ import annotations

import base64
import json
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from morphal.active_learning import (
    REPORT_COLUMNS,
    ActiveLearningRun,
    reports_to_rows,
)
from morphal.data import pixels_to_bytes
from morphal.errors import DataFormatError
from morphal.metrics import emit_report_csv


def save_run_checkpoint(run: ActiveLearningRun, path) -> None:
    Path(path).write_text(json.dumps(run.to_document()), encoding="utf-8")


def load_run_checkpoint(dataset, path) -> ActiveLearningRun:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON ({exc})") from None
    return ActiveLearningRun.from_document(dataset, doc)


class LabelingService:
    """Thread-safe facade over one run; see the module docstring."""

    def __init__(self, run: ActiveLearningRun, out_dir=None):
        self.run = run
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self._lock = threading.Lock()
        self._training = False
        self._worker: Optional[threading.Thread] = None
        self._error: Optional[str] = None
        with self._lock:
            self._maybe_start_training_locked()

    # -- internals ------------------------------------------------------

    def _maybe_start_training_locked(self) -> None:
        if self.run.round_complete() and not self._training:
            self._training = True
            self._worker = threading.Thread(target=self._train_worker,
                                            daemon=True)
            self._worker.start()

    def _train_worker(self) -> None:
        # The run is only touched by this thread while _training is set;
        # submissions are rejected and reads use plain counters.
        try:
            self.run.finish_round()
        except Exception as exc:  # noqa: BLE001 - surfaced via /api/status
            with self._lock:
                self._error = str(exc)
                self._training = False
            return
        with self._lock:
            self._training = False
            self._persist_locked()
            self._maybe_start_training_locked()

    def _persist_locked(self) -> None:
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        save_run_checkpoint(self.run, self.out_dir / "checkpoint.json")
        if self.run.reports:
            emit_report_csv(reports_to_rows(self.run.reports),
                            self.out_dir / "report.csv")

    def wait_idle(self, timeout: float = 60.0) -> None:
        """Block until no training worker is active (tests and shutdown)."""
        worker = self._worker
        if worker is not None:
            worker.join(timeout)

    # -- API operations ---------------------------------------------------

    def status(self) -> dict:
        with self._lock:
            run = self.run
            last_val = run.reports[-1].val_acc if run.reports else None
            last_test = run.reports[-1].test_acc if run.reports else None
            return {
                "round": run.round_index,
                "labeled": run.pool.labeled_count,
                "unlabeled": len(run.pool.unlabeled),
                "quota_remaining": run.quota_remaining(),
                "actions_spent": run.pool.actions_spent,
                "last_val_acc": last_val,
                "last_test_acc": last_test,
                "awaiting_labels": (not self._training and not run.done
                                    and bool(run.pending)),
                "done": run.done,
                "training": self._training,
                "error": self._error,
            }

    def get_queries(self, limit: int) -> tuple[int, object]:
        if limit < 1:
            return 400, {"detail": "limit must be >= 1"}
        with self._lock:
            if self._training:
                return 409, {"detail": "training in progress"}
            if self.run.done:
                return 409, {"detail": "run is complete; no active round"}
            payload = []
            for image_id in self.run.pending_queries()[:limit]:
                rec = self.run.dataset.images[image_id]
                payload.append({
                    "id": image_id,
                    "width": rec.width,
                    "height": rec.height,
                    "pixels": base64.b64encode(
                        pixels_to_bytes(rec.pixels)).decode("ascii"),
                })
            return 200, payload

    def submit_label(self, image_id, label) -> tuple[int, dict]:
        if not isinstance(image_id, str) or not image_id:
            return 400, {"detail": "id must be a nonempty string"}
        if label not in (0, 1):
            return 400, {"detail": f"label must be 0 or 1, got {label!r}"}
        with self._lock:
            if self._training:
                return 409, {"detail": "training in progress"}
            run = self.run
            if run.done:
                return 409, {"detail": "run is complete"}
            if image_id not in run.pool.universe:
                return 404, {"detail": f"unknown id {image_id!r}"}
            if image_id in run.pool.labeled:
                return 409, {"detail": f"id {image_id!r} already answered"}
            if image_id not in run.pending:
                return 409, {"detail": f"id {image_id!r} is not queried this round"}
            run.submit(image_id, int(label))
            remaining = run.quota_remaining()
            self._maybe_start_training_locked()
            return 200, {"accepted": True, "quota_remaining": remaining}

    def report_csv(self) -> str:
        import csv as _csv
        import io

        with self._lock:
            rows = reports_to_rows(self.run.reports)
        buf = io.StringIO()
        writer = _csv.writer(buf)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float)
                             else row[c] for c in REPORT_COLUMNS])
        return buf.getvalue()


def create_app(service: LabelingService, ui_dir=None) -> FastAPI:
    app = FastAPI(title="morphal labeling service")

    @app.get("/api/status")
    def status():
        return service.status()

    @app.get("/api/queries")
    def queries(limit: int = 10):
        code, payload = service.get_queries(limit)
        return JSONResponse(payload, status_code=code)

    @app.post("/api/labels")
    async def labels(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return JSONResponse({"detail": "body must be JSON"}, status_code=400)
        if not isinstance(body, dict):
            return JSONResponse({"detail": "body must be an object"},
                                status_code=400)
        code, payload = service.submit_label(body.get("id"), body.get("label"))
        return JSONResponse(payload, status_code=code)

    @app.get("/api/report")
    def report():
        return PlainTextResponse(service.report_csv(), media_type="text/csv")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")
    return app
