"""Numerical core: autodiff, diffusion, rewards, trainers and the experiment harness."""
