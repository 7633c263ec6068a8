"""FastAPI application answering the v1 loss-oracle protocol.

Endpoints: POST /v1/loss (counted queries), POST /v1/top_class, GET
/v1/meta. Responses depend only on the request body and the weights file;
the only state is a served-query counter used for logging. Gradients are
never exposed.
"""

import json
import logging

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .models import WeightsError, build_model

log = logging.getLogger("oracle_service")


class ClassRequest(BaseModel):
    points: list[list[float]]


class LossRequest(ClassRequest):
    label: int


def load_weights_file(path: str) -> dict:
    """Parsed and validated weights document from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise WeightsError(f"cannot read weights file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise WeightsError(f"weights file {path} is not valid JSON: {exc}") from exc
    build_model(doc)
    return doc


def create_app(weights_doc: dict) -> FastAPI:
    model = build_model(weights_doc)
    app = FastAPI(title="oracle-service", docs_url=None, redoc_url=None)
    app.state.loss_points_served = 0

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request, exc):
        # The protocol promises 400 for malformed bodies, not 422.
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    def stack_points(points: list[list[float]]) -> np.ndarray:
        if len(points) == 0:
            raise HTTPException(status_code=400, detail="points must be non-empty")
        widths = {len(p) for p in points}
        if widths != {model.dimension}:
            raise HTTPException(
                status_code=400,
                detail=f"point dimension {sorted(widths)} != oracle dimension {model.dimension}",
            )
        xs = np.asarray(points, dtype=np.float64)
        if not np.all(np.isfinite(xs)):
            raise HTTPException(status_code=400, detail="point entries must be finite")
        return xs

    @app.get("/v1/meta")
    async def meta():
        return {"dimension": model.dimension, "num_classes": model.num_classes}

    @app.post("/v1/loss")
    async def loss(body: LossRequest):
        xs = stack_points(body.points)
        if model.num_classes is not None and not 0 <= body.label < model.num_classes:
            raise HTTPException(
                status_code=400,
                detail=f"label {body.label} out of range for {model.num_classes} classes",
            )
        losses = model.loss_batch(xs, body.label)
        app.state.loss_points_served += len(body.points)
        log.info(
            "loss batch=%d label=%d total_served=%d",
            len(body.points),
            body.label,
            app.state.loss_points_served,
        )
        return {"losses": [float(v) for v in losses]}

    @app.post("/v1/top_class")
    async def top_class(body: ClassRequest):
        if model.num_classes is None:
            raise HTTPException(status_code=400, detail=f"{model.kind} model is not a classifier")
        xs = stack_points(body.points)
        z = model.logits_batch(xs)
        # Ties resolve toward the lowest class index.
        return {"classes": [int(c) for c in np.argmax(z, axis=1)]}

    return app
