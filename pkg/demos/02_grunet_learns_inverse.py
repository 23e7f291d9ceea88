"""Can a small GRU-Net learn to invert covariance matrices?

The ADL beamformer swaps the explicit inverse of the noise covariance for a
recurrent network.  Here that piece is trained on its own, with direct
supervision: streams of 3x3 Hermitian PSD matrices in, their loaded
inverses out.  Watch the held-out relative error drop by more than ten
times within a minute or so.

    python demos/02_grunet_learns_inverse.py
"""
import torch

from mvdrkit.surrogate import PsdStreams, inverse_sanity

torch.set_num_threads(1)
streams = PsdStreams(n_mics=3, frames=8)
result = inverse_sanity(streams, hidden=(64, 64), steps=1000)
print(f"untrained  relative Frobenius error {result['untrained_error']:.3f}")
print(f"trained    relative Frobenius error {result['trained_error']:.3f}  "
      f"({result['steps']} steps, {result['seconds']:.0f} s)")
print(f"improvement x{result['untrained_error'] / result['trained_error']:.1f}")
