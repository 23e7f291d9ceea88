"""mvdrkit: mask-based and recurrent (ADL) MVDR beamforming for target speech separation.

Submodules:

* ``signal``: STFT/iSTFT and WAV I/O
* ``linalg``: Hermitian products, loaded inversion, principal eigenvectors
* ``features``: LPS, IPD and the directional feature
* ``masking``: complex ratio masks/filters and covariance estimates
* ``beamformer``: MVDR, multi-tap MVDR and frame-wise ADL weights
* ``neural``: GRU-Nets, the filter estimator, gradient checking, checkpoints
* ``simulate``: synthetic microphone-array scenes and datasets
* ``metrics``: Si-SNR, SNR, projection SDR and evaluation reports
* ``system`` / ``train`` / ``cli``: separation systems, training and the command line
"""
__version__ = "0.1.0"
