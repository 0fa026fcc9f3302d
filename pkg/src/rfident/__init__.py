"""Wideband spectro-temporal RF emission identification toolkit."""

from .boxes import Annotation, BoundingBox, Detection, iou
from .detect import baseline_detect, decode_tensor, filter_schedule, kmeans_anchors, nms
from .evaluate import average_precision, evaluate, match_detections
from .spectral import (CompressionConfig, FrameGeometry, MappingConfig, PipelineConfig, compress,
                       map_grayscale, render_image)
from .synth import EmissionClass, EmissionSpec, IqRecording, SnrBucket, synthesize_emission

__version__ = "0.1.0"
