"""Masked-crop embedding exporter for the low-shot evaluation engine."""

from .backbones import Backbone, ConstantStub, GridPool, make_backbone
from .export import ExportJob, export
from .maskfiles import ExportError, read_mask_file, visible_records
from .preprocess import masked_crop

__version__ = "0.1.0"
