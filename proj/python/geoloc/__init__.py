"""Text-based Twitter user geolocation.

Records are ``(user_id, lat, lon, text)`` tuples. ``train`` returns a
``Model`` that predicts, evaluates, saves and answers nearest-term queries.
"""

from ._geoloc import (
    Discretiser,
    GeolocError,
    Model,
    Vocabulary,
    dialect_eval,
    evaluate,
    featurize,
    fit_kdtree,
    fit_kmeans,
    fit_vocabulary,
    haversine_km,
    load_model,
    tokenize,
    train,
)

__all__ = [
    "Discretiser",
    "GeolocError",
    "Model",
    "Vocabulary",
    "dialect_eval",
    "evaluate",
    "featurize",
    "fit_kdtree",
    "fit_kmeans",
    "fit_vocabulary",
    "haversine_km",
    "load_model",
    "tokenize",
    "train",
]
