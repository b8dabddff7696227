from .config import ConfigError, RunConfig, load_config, make_config, parse_config_text
from .csvio import CsvWriter, csv_header, read_csv, write_csv
from .experiments import (ConvergenceResult, RunSummary, SymplecticityResult, TableRow, build,
                          canonical_form, cmd_convergence, cmd_run, cmd_symplecticity, cmd_table,
                          fit_slope, global_error, load_preset, preset_names, step_jacobians,
                          symplectic_deviation)
