# -*- encoding: utf-8 -*-

from .common                    import *
from .h_files                   import *
