"""HTTP/JSON layer over the curation service.

Decision writes are serialized with a lock so the append-only audit log
stays the single source of truth; reads are concurrent-safe. The reviewer
UI is served from the bundled assets directory when present.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .curation import (
    CurationError, CurationService, PendingRemainingError, ReviewDecision,
    ShortfallError, SupersedesError, UnknownImageError,
)
from .manifest import save_manifest

ASSETS_DIR = Path(__file__).parent / "assets"

_MEDIA_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg"}


class DecisionRequest(BaseModel):
    image_id: str
    decision: str
    reviewer: str
    note: str | None = None
    supersedes: str | None = None


class FinalizeRequest(BaseModel):
    target_accepted: int


def make_app(
    service: CurationService,
    data_root: str | Path,
    target_accepted: int | None = None,
    assets_dir: str | Path | None = ASSETS_DIR,
) -> FastAPI:
    app = FastAPI(title="synthvision curation")
    data_root = Path(data_root)
    write_lock = threading.Lock()

    @app.get("/api/queue/next")
    def queue_next(prompt_id: str | None = None):
        record = service.next_pending(prompt_id)
        if record is None:
            return Response(status_code=204)
        return record.to_dict()

    @app.get("/api/images/{image_id}")
    def image_bytes(image_id: str):
        try:
            record = service.manifest.by_id(image_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        path = data_root / record.path
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"image file missing: {record.path}")
        suffix = path.suffix.lower()
        return FileResponse(path, media_type=_MEDIA_TYPES.get(suffix, "application/octet-stream"))

    @app.post("/api/decisions")
    def post_decision(body: DecisionRequest):
        decision = ReviewDecision(
            image_id=body.image_id,
            decision=body.decision,
            reviewer=body.reviewer,
            note=body.note,
            supersedes=body.supersedes,
        )
        with write_lock:
            try:
                state = service.record_decision(decision)
            except UnknownImageError as e:
                raise HTTPException(status_code=404, detail=str(e))
            except (SupersedesError, CurationError) as e:
                raise HTTPException(status_code=400, detail=str(e))
        return state.to_dict()

    @app.get("/api/decisions")
    def list_decisions():
        return [d.to_dict() for d in service.decisions]

    @app.get("/api/progress")
    def progress():
        payload = service.state().to_dict()
        payload["per_prompt"] = service.per_prompt_breakdown()
        if target_accepted is not None:
            payload["target_accepted"] = target_accepted
        return payload

    @app.post("/api/finalize")
    def finalize(body: FinalizeRequest):
        with write_lock:
            try:
                curated = service.finalize(body.target_accepted)
            except PendingRemainingError as e:
                return JSONResponse(status_code=409, content={
                    "error": "pending_remaining", "pending": e.pending, "detail": str(e),
                })
            except ShortfallError as e:
                return JSONResponse(status_code=409, content={
                    "error": "shortfall", "shortfall": e.shortfall, "detail": str(e),
                })
            path = save_manifest(curated, service.run_dir / "curated_manifest.jsonl")
        return {"manifest_path": str(path), "accepted": len(curated)}

    if assets_dir is not None and Path(assets_dir).is_dir():
        app.mount("/", StaticFiles(directory=assets_dir, html=True), name="ui")

    return app


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8008) -> None:
    """Run the service until interrupted (SIGINT/SIGTERM shut down cleanly)."""
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")
