"""Topologically quantized piezoelectric polarization for two-band lattices."""

from .errors import (ConfigError, DegenerateEmbeddingError, GapClosedError,
                     MethodDisagreementError, NotConnectableError,
                     PiezotbError, ResolutionError, StepSizeError,
                     SymbolProjectionError)
from .model import (BlochSymbol, Coefficient, HoppingModel, HoppingTerm,
                    LatticeGeometry, clifford_basis, eval_symbol,
                    model_from_document, nn_graphene_model, pauli_matrices,
                    symbol_k_gradient, uniaxial_model)
from .loops import (Loop, concat_with_path, generator_eta, lifted_segment,
                    loop_from_document, perturb, polyline_path, repeat,
                    reverse)
from .spectral import (BandRanges, GapMap, GapReport, band_energies,
                       band_ranges, fermi_projection, gap_map,
                       gapless_predicate_uniaxial, k_axis, k_grid,
                       margin_predicate_uniaxial, min_gap_along_loop,
                       spectral_distance)
from .topology import (ChernMatrix, PoleCell, PoleCellSet, SphereAngles,
                       TrivialityVerdict, chern_matrix, chern_plaquette,
                       chern_report, chern_winding, kato_intertwiner,
                       local_section, occupied_state, pole_cells,
                       projector_field, sphere_angles, triviality_check,
                       unit_vector)
from .polarization import (PolarizationResult, dynamical_polarization,
                           ksv_quantized, ksv_riemann, physical_polarization,
                           snap_integer)
from .disorder import (DisorderRealization, FiniteLatticeOperator,
                       GapPersistenceReport, HomotopyChainReport,
                       anderson_potential, disorder_realization,
                       finite_fermi_projection, gap_persistence,
                       potential_from_realization, projector_homotopy_check,
                       realspace_hamiltonian, realspace_polarization,
                       trace_per_volume)
from .symmetry import (SymmetryVerdict, certify_model_symmetry,
                       check_inversion, clifford_relation_failures,
                       symmetry_class, theta_matrix, upsilon_matrix,
                       verify_symmetry_relations)

__version__ = "0.1.0"
