# core/prediction_log_manager.py
# Validation and loading of prediction-log CSV files for calibration

from typing import Any, Dict

import pandas as pd

from core.calibration_metrics import PredictionLog
from utils.errors import CalibrationError, MalformedInputError


class PredictionLogManager:
    """Utility class to validate and load a (confidence, predicted, actual) CSV."""

    def __init__(self, csv_path: str):
        self.csv_path = csv_path
        self.required_columns = ['confidence', 'predicted', 'actual']
        self.integer_fields = ['predicted', 'actual']

    def validate_csv_structure(self) -> Dict[str, Any]:
        """Validate the CSV structure and return validation results."""
        results = {
            'valid': True,
            'errors': [],
            'warnings': [],
            'stats': {}
        }

        try:
            df = pd.read_csv(self.csv_path, float_precision="round_trip")
        except FileNotFoundError:
            results['valid'] = False
            results['errors'].append(f"CSV file not found: {self.csv_path}")
            return results
        except Exception as e:
            results['valid'] = False
            results['errors'].append(f"Failed to read CSV file: {e}")
            return results

        if df.empty:
            results['valid'] = False
            results['errors'].append("CSV file has no rows.")
            return results

        # 1. Check for missing columns
        missing_columns = set(self.required_columns) - set(df.columns)
        if missing_columns:
            results['valid'] = False
            results['errors'].append(f"Missing required columns: {sorted(missing_columns)}")
            return results

        extra_columns = set(df.columns) - set(self.required_columns)
        if extra_columns:
            results['warnings'].append(f"Ignoring extra columns: {sorted(extra_columns)}")

        # 2. Coerce to numbers; anything unparseable becomes NaN
        for field in self.required_columns:
            df[field] = pd.to_numeric(df[field], errors='coerce')
            if df[field].isnull().any():
                results['valid'] = False
                bad_rows = df.index[df[field].isnull()].tolist()
                results['errors'].append(f"Non-numeric or empty values in '{field}' at rows: {bad_rows}")

        if not results['valid']:
            return results

        # 3. Class indices must be non-negative integers
        for field in self.integer_fields:
            not_integral = df.index[(df[field] % 1 != 0) | (df[field] < 0)].tolist()
            if not_integral:
                results['valid'] = False
                results['errors'].append(f"'{field}' must hold non-negative integers, bad rows: {not_integral}")

        # 4. Confidences must lie in (0,1]
        out_of_range = df.index[~((df['confidence'] > 0) & (df['confidence'] <= 1))].tolist()
        if out_of_range:
            results['valid'] = False
            results['errors'].append(f"Confidence outside (0,1] at rows: {out_of_range}")

        if not results['valid']:
            return results

        low_confidence = int((df['confidence'] < 0.5).sum())
        if low_confidence:
            results['warnings'].append(f"{low_confidence} rows have confidence below 0.5")

        results['stats'] = {
            'total_predictions': len(df),
            'num_classes_seen': int(max(df['predicted'].max(), df['actual'].max())) + 1,
            'accuracy': float((df['predicted'] == df['actual']).mean()),
            'mean_confidence': float(df['confidence'].mean()),
        }

        return results

    def load(self) -> PredictionLog:
        """Validate and return the log; raises on any validation error."""
        results = self.validate_csv_structure()
        if not results['valid']:
            raise MalformedInputError(f"Invalid prediction log {self.csv_path}: {'; '.join(results['errors'])}")
        df = pd.read_csv(self.csv_path, float_precision="round_trip")
        try:
            return PredictionLog(
                confidences=df['confidence'].to_numpy(dtype=float),
                predicted=df['predicted'].to_numpy().astype(int),
                actual=df['actual'].to_numpy().astype(int),
            )
        except CalibrationError as e:
            raise MalformedInputError(f"Invalid prediction log {self.csv_path}: {e}") from e


def write_prediction_log(log: PredictionLog, path: str):
    pd.DataFrame({
        'confidence': log.confidences,
        'predicted': log.predicted,
        'actual': log.actual,
    }).to_csv(path, index=False)
