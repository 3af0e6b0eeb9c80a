"""Default-scale training runs: 500 scenes for training, 100 held out."""
import pytest

from freeprop.core.enums import AblationAxis
from freeprop.data.synthdata import SceneConfig, generate_dataset
from freeprop.pipeline.ablation import run_ablation
from freeprop.pipeline.evaluation import evaluate
from freeprop.pipeline.model import ModelParams
from freeprop.pipeline.training import train
from freeprop.utils.config import RunConfig

pytestmark = pytest.mark.slow

TRAIN_SCENES = 500
HELD_OUT = 100


@pytest.fixture(scope='module')
def default_run():
    return RunConfig()


@pytest.fixture(scope='module')
def train_scenes(default_run):
    return generate_dataset(default_run.scene, count=TRAIN_SCENES, first_index=0)


@pytest.fixture(scope='module')
def held_out_scenes(default_run):
    return generate_dataset(default_run.scene, count=HELD_OUT, first_index=TRAIN_SCENES)


@pytest.fixture(scope='module')
def untrained_recall(default_run, held_out_scenes):
    params = ModelParams.init(default_run.model, default_run.train.seed)
    return evaluate(params, held_out_scenes, default_run.model, default_run.csp, default_run.eval).ar(10)


def test_default_scene_count():
    assert SceneConfig().count == TRAIN_SCENES


def test_untrained_recall_is_low(untrained_recall):
    assert untrained_recall < 0.2


def test_training_lifts_recall(default_run, train_scenes, held_out_scenes, untrained_recall):
    result = train(train_scenes, default_run.train, default_run.model, default_run.csp, default_run.loss)
    trained = evaluate(result.params, held_out_scenes, default_run.model, default_run.csp, default_run.eval).ar(10)
    assert result.epochs[-1].total < result.epochs[0].total
    assert trained >= 0.5
    assert trained >= 3.0 * untrained_recall


def test_full_model_holds_against_module_ablations(default_run, train_scenes, held_out_scenes):
    table = run_ablation(AblationAxis.MODULES, default_run, train_scenes, held_out_scenes)
    recall = dict(table.summary(10))
    for variant in ('no_sia', 'no_csp', 'no_cgqs'):
        assert recall['full'] >= recall[variant] - 0.03, variant
