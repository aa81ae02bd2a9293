from . import algebra
