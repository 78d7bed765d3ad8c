"""flowfactory — optical-flow ground truth from volume-rendered scenes."""

from importlib.metadata import version as _version

__version__ = _version("flowfactory")

from flowfactory.helpers import FactoryError as FactoryError
from flowfactory.scene import SceneModel as SceneModel
from flowfactory.scene import VolumePrimitive as VolumePrimitive
from flowfactory.scene import Camera as Camera
from flowfactory.scene import Pose as Pose
from flowfactory.scene import PosePairSpec as PosePairSpec
from flowfactory.scene import look_at as look_at
from flowfactory.scene import sample_pose_pairs as sample_pose_pairs
from flowfactory.render import RaySamplingConfig as RaySamplingConfig
from flowfactory.render import render_view as render_view
from flowfactory.flowgen import FlowField as FlowField
from flowfactory.flowgen import reproject as reproject
from flowfactory.masks import FilterConfig as FilterConfig
from flowfactory.masks import filter_label as filter_label
from flowfactory.foreground import sample_floaters as sample_floaters
from flowfactory.foreground import composite as composite
from flowfactory.dataio import read_sample as read_sample
from flowfactory.dataio import write_sample as write_sample
from flowfactory.evalmetrics import flow_epe_all as flow_epe_all
from flowfactory.config import load_pipeline_config as load_pipeline_config
from flowfactory.pipeline import DataFactory as DataFactory
