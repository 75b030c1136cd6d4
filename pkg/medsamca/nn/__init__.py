"parameter containers, basic layers and the reusable blocks"

from medsamca.nn.module import Conv2d
from medsamca.nn.module import LayerNorm
from medsamca.nn.module import Linear
from medsamca.nn.module import Module
from medsamca.nn.module import ModuleList
from medsamca.nn.module import Parameter
from medsamca.nn.module import zero_
from medsamca.nn.blocks import CBAM
from medsamca.nn.blocks import Adapter
from medsamca.nn.blocks import MultiHeadAttention
from medsamca.nn.blocks import ResidualBlock
from medsamca.nn.blocks import TransformerBlock
