"preprocessing, prompts, synthetic data, file formats and datasets"

from medsamca.pipeline.dataset import DatasetManifest
from medsamca.pipeline.dataset import Sample
from medsamca.pipeline.prompts import BoxPrompt
from medsamca.pipeline.prompts import box_from_mask
from medsamca.pipeline.prompts import perturb_box
from medsamca.pipeline.synthetic import gen_synthetic
