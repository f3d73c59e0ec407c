"""Versioned binary container for fitted models.

The container is an ``.npz`` archive holding a JSON metadata record (format
version, model type tag, hyperparameters) plus the model's parameter blobs.
Float arrays round-trip bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import ValidationError
from .base import PopularityRecommender, RandomRecommender, RecommenderModel
from .multivae import MultiVaeRecommender
from .slim import SlimRecommender
from .wrmf import WrmfRecommender

FORMAT_VERSION = 1

MODEL_CLASSES = {
    cls.model_type: cls
    for cls in (
        PopularityRecommender,
        RandomRecommender,
        SlimRecommender,
        WrmfRecommender,
        MultiVaeRecommender,
    )
}


def save_model(model: RecommenderModel, path):
    """Write a fitted model to ``path`` (an .npz archive)."""
    model._require_fitted()
    header = {
        "format_version": FORMAT_VERSION,
        "model_type": model.model_type,
        "meta": model.save_meta(),
    }
    arrays = {f"blob_{k}": np.asarray(v) for k, v in model.save_arrays().items()}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), **arrays)


def load_model(path, train=None) -> RecommenderModel:
    """Load a model saved by :func:`save_model`.

    Models that score from training rows (slim, multivae) additionally need
    ``train`` to produce scores; without it they load fine but raise on
    ``score_user``.
    """
    with np.load(path, allow_pickle=False) as data:
        if "header" not in data.files:
            raise ValidationError(f"{path}: not a model container")
        header = json.loads(str(data["header"][()]))
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise ValidationError(
                f"{path}: unsupported container version {version!r}"
            )
        model_type = header.get("model_type")
        if model_type not in MODEL_CLASSES:
            raise ValidationError(f"{path}: unknown model type {model_type!r}")
        arrays = {
            name[len("blob_"):]: data[name]
            for name in data.files
            if name.startswith("blob_")
        }
    return MODEL_CLASSES[model_type].load(header["meta"], arrays, train=train)
