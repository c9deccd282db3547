from dccaret_cli.log import *
from dccaret_cli.errors import *
from dccaret_cli.utils import *

from dccaret_cli.numerics import *
from dccaret_cli.cca import *
from dccaret_cli.dcca import *
from dccaret_cli.encoders import *
from dccaret_cli.trainer import *
from dccaret_cli.retrieval import *
from dccaret_cli.datagen import *
