from .base import (INNER_NEWTON_FAILED, NEWTON_FAILED, NOT_FINITE, NOT_POSITIVE, OK,
                   STATUS_MESSAGES, StepError, StepOutput, StepResult, Stepper, run_step, step_jit)
from .euler_b import EulerB, euler_b_adaptive_step
from .fixed import (ExplicitEulerFixed, StormerVerletFixed, SymplecticEulerFixed, explicit_euler_step,
                    stormer_verlet_step, symplectic_euler_b_step)
from .htvi import (EULER_B_SCHEME, HTVI4, HTVI4_FULL, LEFT_RECTANGLE, SIMPSON, Htvi, HtviScheme, Quadrature,
                   htvi_discrete_hamiltonian, htvi_legendre, htvi_step, quadrature)
from .taylor import flow_coefficients, taylor_flow
from .driver import (DriverConfig, IntegrationError, StepBudgetError, StepRecord, Trajectory,
                     TrajectoryChunk, integrate)
