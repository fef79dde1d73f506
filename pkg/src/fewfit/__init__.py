"""fewfit: few-shot many-class text classification via batch contrastive
training with token-level MaxSim or CLS similarity, and retrieval-style
inference against encoded class names."""

__version__ = "0.1.0"
