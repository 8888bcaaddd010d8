"""Learned distance metrics for gridded geophysical fields.

Pipeline: synthetic field generation -> signed-log normalization ->
temporal-distance pretext training of a siamese residual network ->
distance-profile calibration -> GAN super-resolution with a representation
content loss -> spectrum/semivariogram evaluation.
"""

__version__ = "0.1.0"
