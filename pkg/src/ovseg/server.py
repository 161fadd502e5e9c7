"""HTTP face of the segmentation engine.

The app is built around one provider pair chosen at startup; requests can
still vary the vocabulary, scales, logit scale and ablation per call.
Masks travel as run-length encodings and the overlay as base64 PNG, so a
browser client needs no tensor parsing.
"""

from __future__ import annotations

import base64
import io
import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, Query, UploadFile
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image, UnidentifiedImageError

from .coretypes import ImageTensor, tensor_dumps
from .encoders import BackendError
from .fusion import ABLATIONS, render_overlay, segment
from .partitioner import ScaleConfig
from .pipeline import DenseInferenceConfig, prepare_image
from .rle import encode_binary_mask, encode_label_map
from .saliency import ConstantSaliency
from .vocabulary import VocabularyError, build_vocabulary

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>ovseg</title></head>
<body><h1>ovseg API</h1>
<p>No UI bundle is installed. The JSON API lives under <code>/api</code>:
<code>GET /api/health</code>, <code>POST /api/segment</code>.</p>
</body></html>
"""


def _decode_upload(data: bytes) -> ImageTensor:
    try:
        with Image.open(io.BytesIO(data)) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except UnidentifiedImageError:
        raise HTTPException(status_code=422, detail="image part is not a decodable image")
    return ImageTensor(arr)


def create_app(
    provider,
    saliency_provider=None,
    config: DenseInferenceConfig = DenseInferenceConfig(),
    static_dir=None,
) -> FastAPI:
    """Assemble the API around one encoder/saliency provider pair."""
    if saliency_provider is None:
        saliency_provider = ConstantSaliency(1.0)
    app = FastAPI(title="ovseg", docs_url=None, redoc_url=None)

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "embedding_dim": provider.embedding_dim,
            "providers": {
                "image": type(provider).__name__,
                "saliency": type(saliency_provider).__name__,
            },
        }

    @app.post("/api/segment")
    def segment_endpoint(
        image: UploadFile = File(...),
        request: str = Form(...),
        probabilities: bool = Query(False),
    ):
        try:
            body = json.loads(request)
        except json.JSONDecodeError as exc:
            raise HTTPException(status_code=422, detail=f"request part is not JSON: {exc}")
        if not isinstance(body, dict):
            raise HTTPException(status_code=422, detail="request part must be a JSON object")

        prompts = body.get("prompts")
        if not isinstance(prompts, list) or not prompts:
            raise HTTPException(status_code=422, detail="prompts must be a non-empty list")
        ablation = body.get("ablation", "full")
        if ablation not in ABLATIONS:
            raise HTTPException(
                status_code=422,
                detail=f"unknown ablation {ablation!r}, expected one of {list(ABLATIONS)}",
            )
        scales_body = body.get("scales")
        global0 = bool(body.get("global_scale0", config.scales.global_scale0))
        try:
            if scales_body is None:
                scale_cfg = ScaleConfig(config.scales.patch_sizes, global0)
            else:
                scale_cfg = ScaleConfig(tuple(scales_body), global0)
            run_config = DenseInferenceConfig(
                scales=scale_cfg,
                encoder_input=config.encoder_input,
                short_side=config.short_side,
                logit_scale=float(body.get("logit_scale", config.logit_scale)),
            )
            vocab = build_vocabulary(prompts)
        except (TypeError, ValueError, VocabularyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

        tensor = _decode_upload(image.file.read())
        try:
            result = segment(
                tensor,
                vocab,
                provider,
                saliency_provider=saliency_provider,
                config=run_config,
                ablation=ablation,
            )
        except (BackendError, RuntimeError) as exc:
            raise HTTPException(status_code=500, detail=str(exc))

        labels = result.labels.data
        per_class = []
        for idx, name in enumerate(result.classes):
            mask = (labels == idx).astype(np.uint8)
            per_class.append(
                {
                    "name": name,
                    "mask_rle": encode_binary_mask(mask),
                    "pixel_fraction": float(mask.mean()),
                }
            )
        prepared = prepare_image(tensor, run_config.short_side)
        overlay = render_overlay(prepared, result)
        buf = io.BytesIO()
        overlay.save(buf, format="PNG")

        payload = {
            "classes": list(result.classes),
            "labels_rle": encode_label_map(labels),
            "per_class": per_class,
            "overlay_png_b64": base64.b64encode(buf.getvalue()).decode("ascii"),
            "config_fingerprint": result.fingerprint,
            "meta": result.meta,
        }
        if probabilities:
            payload["probabilities_cdiy_b64"] = base64.b64encode(
                tensor_dumps(result.probabilities)
            ).decode("ascii")
        return payload

    if static_dir is not None and (Path(static_dir) / "index.html").exists():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return _PLACEHOLDER_PAGE

    return app
