"""Bootstrap a binary image classifier from a handful of guide images.

The toolkit covers the full loop: fine-tune a small denoising diffusion
model with prior preservation, run prompt campaigns to generate synthetic
candidates, curate them through a reviewer service, assemble the dataset
split, train a ViT-style classifier, and emit the evaluation report.
"""

__version__ = "0.1.0"
