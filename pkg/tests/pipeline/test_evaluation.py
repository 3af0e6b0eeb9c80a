from dataclasses import replace

import pytest

from freeprop.core.enums import AblationAxis, MatchingMode
from freeprop.core.errors import ConfigError
from freeprop.core.geometry import Annotation, BoxXYXY
from freeprop.data.synthdata import SceneConfig
from freeprop.modules.matching_loss import LossConfig
from freeprop.pipeline.ablation import ITERATION_VALUES, K_VALUES, LAMBDA_VALUES, axis_variants, run_ablation
from freeprop.pipeline.evaluation import EvalConfig, evaluate, evaluate_proposals, propose
from freeprop.pipeline.model import ModelParams
from freeprop.pipeline.training import TrainConfig
from freeprop.utils.config import LoggingConfig, PathsConfig, RunConfig


@pytest.fixture
def micro_run(micro_scene_config, micro_model_config, micro_csp_config):
    return RunConfig(
        scene=micro_scene_config,
        model=micro_model_config,
        csp=micro_csp_config,
        loss=LossConfig(),
        train=TrainConfig(epochs=1, batch_size=4),
        eval=EvalConfig(budgets=(1, 4), held_out=4),
        paths=PathsConfig(),
        logging=LoggingConfig(),
    )


class TestEvaluateProposals:

    def test_budgets_and_report_layout(self):
        gt = BoxXYXY(0.1, 0.1, 0.5, 0.5)
        miss = BoxXYXY(0.8, 0.8, 0.9, 0.9)
        report = evaluate_proposals([[miss, gt]], [Annotation([gt])], budgets=(2, 1))
        assert report.ar(1) == 0.0
        assert report.ar(2) == pytest.approx(1.0)
        document = report.to_dict()
        assert list(document['budgets']) == ['AR@1', 'AR@2']
        assert document['num_images'] == 1
        assert set(document['budgets']['AR@1']) >= {'AR', 'AR_s', 'AR_m', 'AR_l'}

    def test_optimal_matching_is_the_default(self):
        assert EvalConfig().matching == MatchingMode.OPTIMAL.value
        gt = [BoxXYXY(0.1, 0.1, 0.5, 0.5), BoxXYXY(0.3, 0.3, 0.6, 0.6)]
        proposals = [[BoxXYXY(0.3, 0.3, 0.6, 0.6), BoxXYXY(0.1, 0.1, 0.52, 0.5)]]
        default = evaluate_proposals(proposals, [Annotation(gt)], budgets=(2,))
        greedy = evaluate_proposals(proposals, [Annotation(gt)], budgets=(2,), matching=MatchingMode.GREEDY)
        assert default.ar(2) == evaluate_proposals(proposals, [Annotation(gt)], budgets=(2,), matching=MatchingMode.OPTIMAL).ar(2)
        assert greedy.ar(2) <= default.ar(2)

    @pytest.mark.parametrize('changes', [{'budgets': ()}, {'budgets': (0,)}, {'matching': 'best'}, {'held_out': -1}])
    def test_invalid_config(self, changes):
        with pytest.raises(ConfigError):
            replace(EvalConfig(), **changes).validate()


class TestEvaluate:

    def test_untrained_model(self, micro_model_config, micro_csp_config, micro_scenes):
        params = ModelParams.init(micro_model_config, 0)
        report = evaluate(params, micro_scenes[:3], micro_model_config, micro_csp_config, EvalConfig(budgets=(1, 4)))
        assert report.num_images == 3
        assert 0.0 <= report.ar(1) <= report.ar(4) <= 1.0

    def test_propose_budget(self, micro_model_config, micro_csp_config, micro_scenes):
        proposals = propose(micro_scenes[0].image, ModelParams.init(micro_model_config, 0), micro_model_config, micro_csp_config)
        assert len(proposals) == micro_model_config.num_queries


class TestAblation:

    def test_axis_variants(self, micro_run):
        assert [value for value, _ in axis_variants(AblationAxis.K, micro_run)] == list(K_VALUES)
        assert [run.loss.lambda_ctr for _, run in axis_variants(AblationAxis.LAMBDA, micro_run)] == list(LAMBDA_VALUES)
        assert [run.csp.iterations for _, run in axis_variants(AblationAxis.ITERATIONS, micro_run)] == list(ITERATION_VALUES)
        modules = dict(axis_variants(AblationAxis.MODULES, micro_run))
        assert not modules['no_sia'].model.use_sia
        assert modules['no_csp'].csp.iterations == 0
        assert not modules['no_cgqs'].model.use_cgqs
        assert modules['full'] is micro_run

    def test_rows_share_seed_and_data(self, micro_run, micro_scenes):
        eval_scenes = micro_scenes[:2]
        table = run_ablation(AblationAxis.K, micro_run, micro_scenes, eval_scenes, values=(1, 2))
        assert [row.value for row in table.rows] == [1, 2]
        assert all(row.config['train']['seed'] == micro_run.train.seed for row in table.rows)
        summary = table.summary(4)
        assert [value for value, _ in summary] == [1, 2]
        assert all(0.0 <= ar <= 1.0 for _, ar in summary)
        assert table.to_dict()['axis'] == 'k'

    def test_modules_axis(self, micro_run, micro_scenes):
        table = run_ablation(AblationAxis.MODULES, micro_run, micro_scenes[:4], micro_scenes[4:6])
        assert [row.value for row in table.rows] == ['full', 'no_sia', 'no_csp', 'no_cgqs']


def test_scene_config_fixture_matches_model(micro_scene_config, micro_model_config):
    assert isinstance(micro_scene_config, SceneConfig)
    assert micro_scene_config.canvas == micro_model_config.canvas
