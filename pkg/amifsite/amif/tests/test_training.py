import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from django.conf import settings
from django.test import SimpleTestCase

from amif.checkpoints import load_checkpoint, model_fingerprint, save_checkpoint
from amif.constants import WATERMARK_LABEL_FILE
from amif.datasets import PairDataset, make_synthetic_fixture, load_pairs, load_label, save_image
from amif.exceptions import ConfigurationError, InputValidationError, NumericError
from amif.losses import LossBundle
from amif.metrics import psnr
from amif.pipeline import degrade, fuse_unauthorized, recover_authorized, fuse_clean, residual_dice
from amif.training import (
    TrainConfig, Trainer, lr_at_epoch, check_finite, compute_losses, make_optimizer, train_step,
    epoch_loader, history_column, relative_drop,
)

from .helpers import tiny_model, tiny_train_dict


class TrainConfigTests(SimpleTestCase):
    def test_learning_rate_schedule(self):
        cfg = TrainConfig()

        self.assertEqual(lr_at_epoch(cfg, 0), 1e-4)
        self.assertEqual(lr_at_epoch(cfg, 99), 1e-4)
        self.assertEqual(lr_at_epoch(cfg, 100), 5e-5)
        self.assertEqual(lr_at_epoch(cfg, 200), 2.5e-5)

    def test_scheduler_follows_the_schedule(self):
        optimizer, scheduler = make_optimizer(nn.Linear(2, 2), TrainConfig())

        for _ in range(100):
            optimizer.step()
            scheduler.step()

        self.assertAlmostEqual(optimizer.param_groups[0]['lr'], 5e-5, places=15)
        self.assertEqual(optimizer.defaults['betas'], (0.9, 0.999))

    def test_unknown_keys_are_rejected(self):
        with self.assertRaisesMessage(ConfigurationError, 'learning_rate'):
            TrainConfig.from_dict({'learning_rate': 0.1})

    def test_invalid_values_are_rejected(self):
        with self.assertRaises(ConfigurationError):
            TrainConfig(batch_size=0)
        with self.assertRaises(ConfigurationError):
            TrainConfig(lr_decay=1.5)

    def test_json_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'train.json'
            path.write_text(json.dumps(TrainConfig(epochs=3, betas=(0.8, 0.9)).to_dict()))

            cfg = TrainConfig.from_json(path)

        self.assertEqual(cfg.epochs, 3)
        self.assertEqual(cfg.betas, (0.8, 0.9))

    def test_missing_or_malformed_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            broken = Path(tmp) / 'broken.json'
            broken.write_text('{not json')

            with self.assertRaises(ConfigurationError):
                TrainConfig.from_json(Path(tmp) / 'absent.json')
            with self.assertRaises(ConfigurationError):
                TrainConfig.from_json(broken)


class TrainStepTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        spec = make_synthetic_fixture(Path(self.tmp.name), 2, size=16, seed=0)
        pairs = load_pairs(spec, 'train')
        self.a = torch.from_numpy(np.stack([p.a for p in pairs]))[:, None]
        self.b = torch.from_numpy(np.stack([p.b for p in pairs]))[:, None]
        self.label = torch.from_numpy(load_label(spec.label_path, 16)).expand(2, 1, 16, 16)
        self.model = tiny_model()

    def tearDown(self):
        self.tmp.cleanup()

    def test_first_step_losses_are_finite_and_non_negative(self):
        bundle = compute_losses(self.model, self.a, self.b, self.label)

        for name, value in bundle.as_floats().items():
            self.assertTrue(np.isfinite(value), name)
            self.assertGreaterEqual(value, 0.0, name)

    def test_non_finite_term_is_named(self):
        values = {name: torch.tensor(1.0) for name in LossBundle.TERMS}
        values['l_dice'] = torch.tensor(float('nan'))

        with self.assertRaisesMessage(NumericError, "'l_dice' is not finite at step 7"):
            check_finite(LossBundle(**values), 7)

    def test_single_batch_overfits(self):
        cfg = TrainConfig(lr=1e-3)
        optimizer, _ = make_optimizer(self.model, cfg)

        totals = [train_step(self.model, optimizer, (self.a, self.b), self.label, cfg, step).total.item()
                  for step in range(50)]

        self.assertTrue(all(np.isfinite(totals)))
        self.assertGreaterEqual(relative_drop(totals), 0.2)

    def test_train_step_updates_every_submodule(self):
        cfg = TrainConfig()
        optimizer, _ = make_optimizer(self.model, cfg)
        before = model_fingerprint(self.model)

        train_step(self.model, optimizer, (self.a, self.b), self.label, cfg)

        self.assertNotEqual(model_fingerprint(self.model), before)
        for name in ('shared_encoder', 'private_a', 'decoder', 'fusion', 'watermark', 'coupling', 'watermark_head'):
            grads = [p.grad for p in getattr(self.model, name).parameters() if p.grad is not None]
            self.assertTrue(grads, name)


class TrainerTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        make_synthetic_fixture(self.root / 'data', 4, size=16, seed=0)

    def tearDown(self):
        self.tmp.cleanup()

    def config(self, output, **overrides):
        return TrainConfig.from_dict(tiny_train_dict(self.root / 'data', self.root / output, **overrides))

    def test_fit_writes_model_log_and_checkpoints(self):
        result = Trainer(self.config('run', epochs=2)).fit()

        self.assertEqual(result.steps, 4)
        self.assertEqual(len(history_column(result.history, 'total')), 4)
        self.assertTrue((self.root / 'run' / 'checkpoints' / 'latest.npz').exists())
        self.assertTrue((self.root / 'run' / 'checkpoints' / 'training_state.pt').exists())
        self.assertEqual(model_fingerprint(load_checkpoint(result.checkpoint)), result.fingerprint)
        header = (self.root / 'run' / 'losses.csv').read_text().splitlines()[0]
        self.assertEqual(header, 'step,epoch,' + ','.join(LossBundle.TERMS) + ',total,lr')

    def test_max_steps_caps_training(self):
        result = Trainer(self.config('capped', epochs=5, max_steps=3)).fit()

        self.assertEqual(result.steps, 3)

    def test_resume_reproduces_an_uninterrupted_run(self):
        straight = Trainer(self.config('straight', epochs=2)).fit()
        Trainer(self.config('split', epochs=1)).fit()
        resumed = Trainer(self.config('split', epochs=2)).fit(resume=True)

        self.assertEqual(resumed.steps, straight.steps)
        for left, right in zip(history_column(straight.history, 'total'), history_column(resumed.history, 'total')):
            self.assertAlmostEqual(left, right, places=5)

    def test_resume_inside_an_epoch_reproduces_an_uninterrupted_run(self):
        straight = Trainer(self.config('straight', epochs=3, max_steps=6)).fit()
        stopped = Trainer(self.config('split', epochs=3, max_steps=3)).fit()
        resumed = Trainer(self.config('split', epochs=3, max_steps=6)).fit(resume=True)

        self.assertEqual(stopped.epochs, 1)
        self.assertEqual([int(row['epoch']) for row in resumed.history],
                         [int(row['epoch']) for row in straight.history])
        for left, right in zip(history_column(straight.history, 'total'), history_column(resumed.history, 'total')):
            self.assertAlmostEqual(left, right, places=5)
        self.assertEqual(history_column(resumed.history, 'lr'), history_column(straight.history, 'lr'))

    def test_resume_without_state_starts_fresh(self):
        with self.assertLogs('amif.training', level='WARNING'):
            result = Trainer(self.config('fresh', epochs=1)).fit(resume=True)

        self.assertEqual(result.steps, 2)

    def test_invalid_label_file_is_rejected(self):
        save_image(self.root / 'data' / WATERMARK_LABEL_FILE, np.ones((16, 16), dtype=np.float32))

        with self.assertRaises(InputValidationError):
            Trainer(self.config('bad_label', epochs=1)).fit()

    def test_epoch_loader_order_depends_only_on_seed_and_epoch(self):
        dataset = PairDataset(load_pairs(Trainer(self.config('order')).spec, 'train'), seed=3)

        first = [a for a, _ in epoch_loader(dataset, 2, seed=3, epoch=1)]
        again = [a for a, _ in epoch_loader(dataset, 2, seed=3, epoch=1)]
        tail = [a for a, _ in epoch_loader(dataset, 2, seed=3, epoch=1, skip_batches=1)]
        other = [a for a, _ in epoch_loader(dataset, 2, seed=3, epoch=2)]

        self.assertEqual(len(first), 2)
        for left, right in zip(first, again):
            self.assertTrue(torch.equal(left, right))
        self.assertEqual(len(tail), 1)
        self.assertTrue(torch.equal(tail[0], first[1]))
        self.assertFalse(all(torch.equal(x, y) for x, y in zip(first, other)))
        self.assertEqual(tuple(first[0].shape), (2, 1, 16, 16))

    def test_bad_checkpoint_is_rejected(self):
        path = self.root / 'bogus.npz'
        path.write_bytes(b'not an archive')

        with self.assertRaises(ConfigurationError):
            load_checkpoint(path)

    def test_checkpoint_round_trip_keeps_fingerprint(self):
        model = tiny_model(seed=4)

        loaded = load_checkpoint(save_checkpoint(model, self.root / 'model.npz'))

        self.assertEqual(model_fingerprint(loaded), model_fingerprint(model))
        self.assertEqual(loaded.config, model.config)


@unittest.skipUnless(settings.AMIF_RUN_SLOW_TESTS, "set AMIF_RUN_SLOW_TESTS=1 to run the desk-scale training check")
class DeskScaleTrainingTests(SimpleTestCase):
    def test_desk_scale_training(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            spec = make_synthetic_fixture(root / 'data', 64, size=64, seed=0)
            desk = json.loads((Path(settings.BASE_DIR) / 'configs' / 'desk.json').read_text())
            desk.update(data_root=str(root / 'data'), output_dir=str(root / 'run'), log_every=50)
            result = Trainer(TrainConfig.from_dict(desk), spec).fit()

            model = load_checkpoint(result.checkpoint)
            label = torch.from_numpy(load_label(spec.label_path, 64))[None, None]
            pairs = load_pairs(spec, 'test')[:8]
            visibility, blurred, fidelity = [], [], []
            with torch.no_grad():
                for pair in pairs:
                    a, b = (t[None] for t in pair.tensors())
                    i_wf, key = fuse_unauthorized(a, b, model)
                    i_f, _ = recover_authorized(i_wf, key, model)
                    visibility.append(residual_dice(i_wf, a, b, label))
                    blurred.append(residual_dice(degrade(i_wf, 'gaussian_blur'), a, b, label))
                    fidelity.append(psnr(i_f[0, 0].numpy(), fuse_clean(a, b, model)[0, 0].numpy()))

        self.assertEqual(result.steps, 300)
        self.assertGreaterEqual(relative_drop(history_column(result.history, 'l_dice')), 0.5)
        self.assertGreaterEqual(relative_drop(history_column(result.history, 'l_krecov')), 0.5)
        self.assertGreaterEqual(np.mean(visibility), 0.5)
        self.assertGreaterEqual(np.mean(blurred), 0.5 * np.mean(visibility))
        self.assertGreaterEqual(np.mean(fidelity), 30.0)
