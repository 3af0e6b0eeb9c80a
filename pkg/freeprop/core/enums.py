from enum import Enum


class ShapeKind(str, Enum):
    RECTANGLE = 'rectangle'
    ELLIPSE = 'ellipse'
    TRIANGLE = 'triangle'


class MatchingMode(str, Enum):
    OPTIMAL = 'optimal'
    GREEDY = 'greedy'


class AblationAxis(str, Enum):
    K = 'k'
    LAMBDA = 'lambda'
    ITERATIONS = 'iterations'
    MODULES = 'modules'


class OptimizerKind(str, Enum):
    ADAM = 'adam'
    MOMENTUM = 'momentum'


class Subcommand(str, Enum):
    GEN_DATA = 'gen-data'
    TRAIN = 'train'
    EVAL = 'eval'
    PROPOSE = 'propose'
    ABLATE = 'ablate'
    HEATMAP = 'heatmap'
