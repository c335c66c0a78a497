from pyhrom.nn.gradcheck import GradCheckReport, gradient_check, analytic_gradients
from pyhrom.nn.mlp import Activation, MLP, mlp_forward, kaiming_init
from pyhrom.nn.optim import AdamState, adam_step, Scheduler, CyclicSchedule
from pyhrom.nn.params import ParamGroup, Parameter, ParamStore
from pyhrom.nn.tape import Tensor, Tape

__all__ = ['Tensor', 'Tape', 'ParamGroup', 'Parameter', 'ParamStore', 'Activation', 'MLP', 'mlp_forward',
           'kaiming_init', 'AdamState', 'adam_step', 'Scheduler', 'CyclicSchedule', 'GradCheckReport',
           'gradient_check', 'analytic_gradients']
