"""Fundus screening toolkit: quality gate, multimodal diagnosis, DR grading."""

__version__ = "0.1.0"

DISEASES = ("dr", "glaucoma", "dme", "amd", "myopia")
