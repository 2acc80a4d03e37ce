"""Layer-trajectory LSTM acoustic models, lattice-based sequence training,
and a two-pass streaming decode simulator, sized for desk-scale experiments
on a synthetic senone task."""

__version__ = "0.1.0"
