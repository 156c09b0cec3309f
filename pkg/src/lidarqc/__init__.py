"""Post-processing quality estimation for 3D lidar object detections.

The pipeline: ingest detector dumps, replay NMS to recover proposal
pre-images, derive box-wise uncertainty features, fit light-weight meta
models that classify true/false positives and regress localization
quality, evaluate their statistical reliability, and rank likely
annotation errors for human review.
"""

__version__ = "0.1.0"
