"""Return Prediction Service: offline feature store, shared scoring path, HTTP API."""
from .scoring import ManifestMismatch, Predictor, Scored, load_predictor
from .store import FeatureStore, build_store

__all__ = ["FeatureStore", "ManifestMismatch", "Predictor", "Scored", "build_store", "load_predictor"]
