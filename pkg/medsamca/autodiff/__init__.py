"tensors, primitive operations and gradient checking"

from medsamca.autodiff.tensor import Graph
from medsamca.autodiff.tensor import Tensor
from medsamca.autodiff.tensor import as_tensor
from medsamca.autodiff.tensor import backward
from medsamca.autodiff.tensor import no_grad
from medsamca.autodiff.tensor import set_debug
from medsamca.autodiff.gradcheck import GradcheckReport
from medsamca.autodiff.gradcheck import gradcheck

__all__ = [
    "Graph", "Tensor", "as_tensor", "backward", "no_grad", "set_debug",
    "GradcheckReport", "gradcheck",
]
