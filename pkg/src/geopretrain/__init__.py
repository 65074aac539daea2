"""geopretrain: in-domain pre-training of remote-sensing backbones with
transfer to semantic segmentation and object detection."""

__version__ = "0.1.0"
