from .autograd import (
    RunningStats,
    Tensor,
    add,
    batchnorm3d,
    conv3d,
    conv3d_backward,
    conv3d_forward,
    global_avg_pool,
    linear,
    log_softmax,
    matmul,
    mul,
    parameter,
    relu,
    reshape,
    softmax_cross_entropy,
    swish,
    take,
    transpose,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, finite_diff_check
from .optim import OptimState, adam, optimizer_step, sgd
