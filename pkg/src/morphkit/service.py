"""HTTP inference service.

JSON in, lossless PNG (or JSON) out.  Images travel as base64 PNG
fields; once uploaded via /upload they can be referenced by handle to
avoid re-sending pixels on every slider move.  Errors use a fixed
envelope {code, message, field?} with machine-readable codes.

Environment knobs: MORPH_PORT, MORPH_MAX_CONCURRENCY, MORPH_MAX_BODY_BYTES.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import hashlib
import os
import threading
from collections import OrderedDict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .engine import MorphModel, MorphParams, check_weights
from .images import decode_png, encode_png, montage, resample

MAX_IMAGES = 8
_HANDLE_CACHE_SIZE = 64


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field

    def response(self) -> JSONResponse:
        body = {"code": self.code, "message": self.message}
        if self.field:
            body["field"] = self.field
        return JSONResponse(status_code=self.status, content=body)


class MorphRequest(BaseModel):
    image_a: str | None = None
    image_b: str | None = None
    image_a_handle: str | None = None
    image_b_handle: str | None = None
    alpha_c: float = Field(0.5, ge=0.0, le=1.0)
    alpha_s: float = Field(0.5, ge=0.0, le=1.0)
    tau: float = Field(0.0, ge=0.0, le=1.0)
    output_size: tuple[int, int] | None = None


class GridRequest(BaseModel):
    image_a: str | None = None
    image_b: str | None = None
    image_a_handle: str | None = None
    image_b_handle: str | None = None
    n: int = Field(3, ge=2, le=9)
    tau: float = Field(0.0, ge=0.0, le=1.0)
    as_frames: bool = False


class MultiMorphRequest(BaseModel):
    images: list[str] | None = None
    image_handles: list[str] | None = None
    w_c: list[float]
    w_s: list[float]


class TransferRequest(BaseModel):
    source: str | None = None
    target: str | None = None
    source_handle: str | None = None
    target_handle: str | None = None


class UploadRequest(BaseModel):
    image: str


class _HandleStore:
    """Small LRU of uploaded images keyed by content hash."""

    def __init__(self, capacity: int = _HANDLE_CACHE_SIZE):
        self._lock = threading.Lock()
        self._items: OrderedDict[str, np.ndarray] = OrderedDict()
        self._capacity = capacity

    def put(self, image: np.ndarray, raw: bytes) -> str:
        handle = hashlib.sha256(raw).hexdigest()[:16]
        with self._lock:
            self._items[handle] = image
            self._items.move_to_end(handle)
            while len(self._items) > self._capacity:
                self._items.popitem(last=False)
        return handle

    def get(self, handle: str) -> np.ndarray | None:
        with self._lock:
            img = self._items.get(handle)
            if img is not None:
                self._items.move_to_end(handle)
            return img


def _decode_field(b64: str, field: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        return decode_png(raw)
    except (binascii.Error, ValueError, OSError) as err:
        raise ApiError(400, "bad_image", f"field {field} is not a decodable base64 PNG: {err}", field)


def create_app(
    checkpoint_path: str | Path | None = None,
    model: MorphModel | None = None,
    defer_load: bool = False,
) -> FastAPI:
    """Build the service.

    With `defer_load`, the app starts without a model and answers 503
    until `load_model` is called (or the background load completes).
    """
    app = FastAPI(title="morphkit service")
    app.state.model = model
    app.state.checkpoint_path = str(checkpoint_path) if checkpoint_path else None
    app.state.handles = _HandleStore()
    app.state.max_body = int(os.environ.get("MORPH_MAX_BODY_BYTES", 32 * 1024 * 1024))
    app.state.semaphore = asyncio.Semaphore(int(os.environ.get("MORPH_MAX_CONCURRENCY", 4)))

    if checkpoint_path is not None and model is None and not defer_load:
        app.state.model = MorphModel.from_checkpoint(checkpoint_path)

    def load_model() -> None:
        # swap the snapshot atomically; in-flight requests keep the old one
        app.state.model = MorphModel.from_checkpoint(app.state.checkpoint_path)

    app.state.load_model = load_model

    def current_model() -> MorphModel:
        m = app.state.model
        if m is None:
            raise ApiError(503, "model_loading", "model checkpoint not loaded yet")
        return m

    def resolve_image(m: MorphModel, b64: str | None, handle: str | None, field: str) -> np.ndarray:
        if (b64 is None) == (handle is None):
            raise ApiError(
                400, "validation_error", f"provide exactly one of {field} or {field}_handle", field
            )
        if b64 is not None:
            return _decode_field(b64, field)
        img = app.state.handles.get(handle)
        if img is None:
            raise ApiError(400, "unknown_handle", f"handle {handle!r} not found", field)
        return img

    def png_response(image: np.ndarray, resampled: bool) -> Response:
        return Response(
            content=encode_png(image),
            media_type="image/png",
            headers={"X-Resampled-Input": "true"} if resampled else {},
        )

    @app.exception_handler(ApiError)
    async def _api_error(_req, exc: ApiError):
        return exc.response()

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req, exc: RequestValidationError):
        errors = exc.errors()
        first = errors[0] if errors else {}
        loc = [str(part) for part in first.get("loc", []) if part != "body"]
        body = {"code": "validation_error", "message": first.get("msg", "invalid request")}
        if loc:
            body["field"] = ".".join(loc)
        return JSONResponse(status_code=400, content=body)

    @app.exception_handler(Exception)
    async def _server_error(_req, exc: Exception):
        return JSONResponse(
            status_code=500, content={"code": "model_error", "message": str(exc)}
        )

    @app.middleware("http")
    async def _limits(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and int(length) > app.state.max_body:
            return JSONResponse(
                status_code=413,
                content={"code": "payload_too_large", "message": f"body exceeds {app.state.max_body} bytes"},
            )
        async with app.state.semaphore:
            return await call_next(request)

    @app.get("/health")
    def health():
        m = app.state.model
        if m is None:
            return JSONResponse(
                status_code=503, content={"status": "loading", "code": "model_loading"}
            )
        cfg = m.config
        return {
            "status": "ok",
            "model": cfg.to_dict(),
            "classes": cfg.num_classes,
            "image_size": list(cfg.image_size),
        }

    @app.post("/upload")
    def upload(req: UploadRequest):
        try:
            raw = base64.b64decode(req.image, validate=True)
            image = decode_png(raw)
        except (binascii.Error, ValueError, OSError) as err:
            raise ApiError(400, "bad_image", f"image is not a decodable base64 PNG: {err}", "image")
        handle = app.state.handles.put(image, raw)
        return {"handle": handle, "height": image.shape[1], "width": image.shape[2]}

    @app.post("/morph")
    def morph(req: MorphRequest):
        m = current_model()
        x_a = resolve_image(m, req.image_a, req.image_a_handle, "image_a")
        x_b = resolve_image(m, req.image_b, req.image_b_handle, "image_b")
        resampled = m.needs_resample(x_a) or m.needs_resample(x_b)
        out = m.morph(x_a, x_b, MorphParams(req.alpha_c, req.alpha_s, req.tau))
        if req.output_size is not None:
            out = resample(out, tuple(req.output_size))
        return png_response(out, resampled)

    @app.post("/grid")
    def grid(req: GridRequest):
        m = current_model()
        x_a = resolve_image(m, req.image_a, req.image_a_handle, "image_a")
        x_b = resolve_image(m, req.image_b, req.image_b_handle, "image_b")
        resampled = m.needs_resample(x_a) or m.needs_resample(x_b)
        cells = m.manifold_grid(x_a, x_b, req.n, req.tau)
        if req.as_frames:
            frames = [
                base64.b64encode(encode_png(cells[i, j])).decode()
                for i in range(req.n)
                for j in range(req.n)
            ]
            return {"n": req.n, "tau": req.tau, "frames": frames}
        return png_response(montage(cells), resampled)

    @app.post("/multimorph")
    def multimorph(req: MultiMorphRequest):
        m = current_model()
        if (req.images is None) == (req.image_handles is None):
            raise ApiError(
                400, "validation_error", "provide exactly one of images or image_handles", "images"
            )
        if req.images is not None:
            if not 2 <= len(req.images) <= MAX_IMAGES:
                raise ApiError(
                    400, "validation_error", f"images must contain 2..{MAX_IMAGES} entries", "images"
                )
            imgs = [_decode_field(b, f"images[{i}]") for i, b in enumerate(req.images)]
        else:
            if not 2 <= len(req.image_handles) <= MAX_IMAGES:
                raise ApiError(
                    400,
                    "validation_error",
                    f"image_handles must contain 2..{MAX_IMAGES} entries",
                    "image_handles",
                )
            imgs = [
                resolve_image(m, None, h, f"image_handles[{i}]")
                for i, h in enumerate(req.image_handles)
            ]
        try:
            check_weights(req.w_c, len(imgs), "w_c")
            check_weights(req.w_s, len(imgs), "w_s")
        except ValueError as err:
            field = "w_c" if "w_c" in str(err) else "w_s"
            raise ApiError(400, "validation_error", str(err), field)
        resampled = any(m.needs_resample(im) for im in imgs)
        return png_response(m.multi_morph(imgs, req.w_c, req.w_s), resampled)

    @app.post("/transfer")
    def transfer(req: TransferRequest):
        m = current_model()
        src = resolve_image(m, req.source, req.source_handle, "source")
        tgt = resolve_image(m, req.target, req.target_handle, "target")
        resampled = m.needs_resample(src) or m.needs_resample(tgt)
        return png_response(m.appearance_transfer(src, tgt), resampled)

    return app


def serve(checkpoint_path: str | Path, host: str = "127.0.0.1", port: int | None = None) -> None:
    import uvicorn

    if port is None:
        port = int(os.environ.get("MORPH_PORT", 8700))
    app = create_app(checkpoint_path)
    uvicorn.run(app, host=host, port=port, log_level="info")
