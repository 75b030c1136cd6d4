"CBR-Net side branch, attention fusion, backbone and the assembled model"

from medsamca.model.atteffb import AddFusion
from medsamca.model.atteffb import AtteFFB
from medsamca.model.atteffb import FusionMode
from medsamca.model.backbone import MaskDecoder
from medsamca.model.backbone import PromptEncoder
from medsamca.model.backbone import ViTMini
from medsamca.model.cbrnet import CBRNet
from medsamca.model.cbrnet import FeaturePyramid
from medsamca.model.medsamca import MedSAMCA
