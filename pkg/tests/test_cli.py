# -*- coding: utf-8 -*-

"""Tests for the command line interface."""

import json
import os

import pandas as pd
import yaml
from click.testing import CliRunner

from asv_guard.cli import main
from asv_guard.emitters import TRACE_COLUMNS
from asv_guard.manager import Manager
from asv_guard.parsers import FIT_COLUMNS
from tests.constants import (
    TemporaryDirectoryMixin, crossing_scenario_path, diverging_scenario_path, minimal_scenario_path,
    missing_waypoints_path, points_path, short_base_path, unknown_key_path,
)


def _error(result) -> dict:
    """Parse the JSON error line a failed command prints last."""
    return json.loads(result.output.strip().splitlines()[-1])


def _report(result) -> dict:
    """Parse the indented JSON a command prints after any progress output."""
    text = result.output
    return json.loads(text[text.index('{\n'):])


class TestCli(TemporaryDirectoryMixin):
    """Tests the commands and their exit codes."""

    def setUp(self):
        """Make a runner."""
        super().setUp()
        self.runner = CliRunner()

    def test_validate(self):
        """Test a valid scenario is reported."""
        result = self.runner.invoke(main, ['validate', crossing_scenario_path])
        self.assertEqual(0, result.exit_code, msg=result.output)
        self.assertEqual({'valid': True, 'name': 'crossing', 'obstacles': 2}, yaml.safe_load(result.output))

    def test_validate_dump(self):
        """Test the dump fills in every default."""
        result = self.runner.invoke(main, ['validate', '--dump', minimal_scenario_path])
        self.assertEqual(0, result.exit_code, msg=result.output)
        data = yaml.safe_load(result.output)
        self.assertEqual(50, data['psf']['horizon'])
        self.assertEqual([[0.0, 0.0], [200.0, 0.0]], data['path']['waypoints'])

    def test_validation_error(self):
        """Test a validation error exits with 4 and names the field."""
        result = self.runner.invoke(main, ['validate', missing_waypoints_path])
        self.assertEqual(4, result.exit_code)
        error = _error(result)
        self.assertEqual('scenario-validation', error['category'])
        self.assertEqual('path.waypoints', error['field'])

    def test_parse_error(self):
        """Test an unknown key exits with 3 and names the key."""
        result = self.runner.invoke(main, ['validate', unknown_key_path])
        self.assertEqual(3, result.exit_code)
        error = _error(result)
        self.assertEqual('scenario-parse', error['category'])
        self.assertEqual('psf.horizn', error['field'])

    def test_missing_file(self):
        """Test a missing file exits with 5."""
        result = self.runner.invoke(main, ['validate', os.path.join(self.directory, 'nope.yml')])
        self.assertEqual(5, result.exit_code)
        self.assertEqual('io', _error(result)['category'])

    def test_fit_demo(self):
        """Test ellipse fits are written as CSV."""
        out = os.path.join(self.directory, 'fits.csv')
        result = self.runner.invoke(main, ['fit-demo', points_path, '--method', 'stable', '-o', out])
        self.assertEqual(0, result.exit_code, msg=result.output)
        df = pd.read_csv(out)
        self.assertEqual(FIT_COLUMNS, list(df.columns))
        self.assertEqual([0, 1, 2], df['cluster'].tolist())
        self.assertEqual(['ok', 'ok'], df['status'][:2].tolist())

    def test_run(self):
        """Test an episode writes its tables and prints its summary."""
        out = os.path.join(self.directory, 'crossing')
        result = self.runner.invoke(main, ['run', crossing_scenario_path, '-o', out])
        self.assertEqual(0, result.exit_code, msg=result.output)
        summary = _report(result)
        self.assertEqual('crossing', summary['scenario'])
        self.assertEqual(200, summary['ticks'])
        self.assertEqual(0, summary['collisions'])
        trace = pd.read_csv(os.path.join(out, 'trace.csv'))
        self.assertEqual(TRACE_COLUMNS, list(trace.columns))
        self.assertEqual(200, len(trace))

    def test_run_both_sources(self):
        """Test a scenario file and a random seed cannot both be given."""
        result = self.runner.invoke(main, ['run', crossing_scenario_path, '--random', '3'])
        self.assertEqual(2, result.exit_code)

    def test_run_aborted(self):
        """Test an aborted episode exits with 6."""
        out = os.path.join(self.directory, 'diverging')
        result = self.runner.invoke(main, [
            'run', diverging_scenario_path, '--no-psf', '--policy', 'constant', '--info-mode', 'none', '-o', out,
        ])
        self.assertEqual(6, result.exit_code)
        self.assertEqual('episode-aborted', _error(result)['category'])

    def test_batch(self):
        """Test a batch writes one row per seed and stores itself in the database."""
        out = os.path.join(self.directory, 'batch.csv')
        connection = f'sqlite:///{os.path.join(self.directory, "results.db")}'
        result = self.runner.invoke(main, [
            'batch', '--seeds', '1..3', '--no-psf', '--difficulty', 'static', '--base', short_base_path,
            '-o', out, '-c', connection,
        ])
        self.assertEqual(0, result.exit_code, msg=result.output)
        totals = _report(result)
        self.assertEqual(3, totals['episodes'])
        self.assertEqual(0, totals['aborted'])
        self.assertEqual([1, 2, 3], pd.read_csv(out)['seed'].tolist())

        manager = Manager(connection=connection)
        self.assertEqual(1, manager.count_batches())
        self.assertEqual(3, manager.count_episodes())
        manager.session.close()

    def test_bad_seeds(self):
        """Test a malformed seed range is a usage error."""
        for seeds in ('a..b', '3..1', '1,,2'):
            with self.subTest(seeds=seeds):
                result = self.runner.invoke(main, ['batch', '--seeds', seeds])
                self.assertEqual(2, result.exit_code)
