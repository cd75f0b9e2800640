"""Monte Carlo simulator for coverage and area spectral efficiency of
ultra-dense cellular networks on Poisson point processes."""

from .association import AssociationPolicy, NoCoverageError, Rule, associate, mark_active
from .channel import LosForm, LosProbabilityFn, PathLossModel, Variant, los_probability, path_loss_db
from .mcengine import (AseEstimate, CoverageEstimate, Scenario, TrialBatch, activation_approximation,
                       ase, coverage_probability, empirical_activation, evaluate, run_trials,
                       sample_sinr)
from .oracle import coverage_closed_form, isolated_cell_coverage
from .pointprocess import PointSet, Region, sample_hppp, with_typical_ue
from .scaling import SweepSpec, optimize_bs_density, optimize_ue_density, sweep

__version__ = "0.1.0"
