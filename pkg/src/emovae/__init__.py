"""Speech emotion recognition from variational-autoencoder latent features.

LogMel segments are compressed by an AE, VAE or CVAE; the per-segment
latent parameters are fed as a sequence to a two-layer LSTM classifier.
"""

__version__ = "0.1.0"
BUILD_ID = f"emovae {__version__}"
