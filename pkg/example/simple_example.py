import logging

from freeprop import ConfigManager, evaluate, forward, generate_dataset, train
from freeprop.utils.logging import setup_logger

CONFIG_FILE = 'example/micro_config.json'

run = ConfigManager(CONFIG_FILE, ['train.epochs=2']).resolve()
setup_logger('freeprop', run.logging)
logger = logging.getLogger(__name__)

scenes = generate_dataset(run.scene)
held_out = generate_dataset(run.scene, count=run.eval.held_out, first_index=run.scene.first_index + run.scene.count)

result = train(scenes, run.train, run.model, run.csp, run.loss)
report = evaluate(result.params, held_out, run.model, run.csp, run.eval)
for budget in run.eval.budgets:
    logger.info(f'AR@{budget}: {report.ar(budget):.4f}')

top = forward(held_out[0].image, result.params, run.model, run.csp).proposals[:3]
for proposal in top:
    print(f'{proposal.score:.3f} {proposal.box.as_list()}')
