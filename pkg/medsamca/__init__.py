"""Box-prompted segmentation at desk scale: a CNN side branch and attention fusion around a
miniature ViT segmentation backbone, on a small numpy autodiff engine."""

__version__ = "0.1.0"
