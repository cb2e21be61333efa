"""Cart return prediction: embeddings, hybrid cart/item models and a serving path."""

__version__ = "0.1.0"
