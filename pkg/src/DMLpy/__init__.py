"""
Debiased Machine Learning inference for many targets with Python
=================================================================
"""

import pkg_resources

import DMLpy.Utilities
import DMLpy.Data
import DMLpy.Nuisance
import DMLpy.Scores
import DMLpy.Inference
import DMLpy.Bounds
import DMLpy.MonteCarlo
import DMLpy.CLI
from DMLpy.Utilities import *
from DMLpy.Data import *
from DMLpy.Nuisance import *
from DMLpy.Scores import *
from DMLpy.Inference import *
from DMLpy.Bounds import *
from DMLpy.MonteCarlo import *

try:
    __version__ = pkg_resources.get_distribution("DMLpy").version
except pkg_resources.DistributionNotFound:
    __version__ = None
