#!/usr/bin/env python3
"""
Loaders turning run-config references into ribbon objects.
"""

import json
import logging
import os
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from ribbon.errors import ValidationError
from ribbon.frames import BoundaryData, FramedCurve, framed_curve_from_table
from ribbon.geometry import ReferenceCurve, build_reference
from ribbon.limit_energy import FrustrationField
from ribbon.quadform import RelaxedDensity, SymField2

logger = logging.getLogger(__name__)

FLAT_UNIT = {'type': 'flat', 'length': 1.0}


def _read_json(path: str) -> Dict:
    if not os.path.exists(path):
        raise ValidationError(f"File not found: {path}")
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Invalid JSON in {path}: {e}") from e


def _read_csv(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise ValidationError(f"File not found: {path}")
    try:
        return pd.read_csv(path)
    except Exception as e:
        raise ValidationError(f"Could not read table {path}: {e}") from e


def parse_matrix(text: str) -> np.ndarray:
    """'M11,M12,M22' -> symmetric 2x2 matrix."""
    try:
        values = [float(x) for x in str(text).split(',')]
    except ValueError as e:
        raise ValidationError(f"Invalid matrix entries: {text}") from e
    if len(values) != 3:
        raise ValidationError(f"Expected three entries M11,M12,M22, got {len(values)}")
    m11, m12, m22 = values
    return np.array([[m11, m12], [m12, m22]])


def parse_list(text: str) -> Sequence[float]:
    try:
        values = [float(x) for x in str(text).split(',') if x.strip()]
    except ValueError as e:
        raise ValidationError(f"Invalid number list: {text}") from e
    if not values:
        raise ValidationError("Empty number list")
    return values


def material_from_dict(data: Dict) -> RelaxedDensity:
    """{"isotropic": true | scale}, {"K": 3x3 or six entries} or {"engineering": {E1, E2, G12, nu12}}."""
    if 'isotropic' in data:
        flag = data['isotropic']
        scale = 1.0 if flag is True else float(flag)
        return RelaxedDensity.isotropic(scale)
    if 'K' in data:
        K = np.asarray(data['K'], dtype=float)
        if K.shape == (3, 3):
            if np.max(np.abs(K - K.T)) > 1e-12:
                raise ValidationError("Material matrix K must be symmetric")
            return RelaxedDensity.from_matrix(K)
        return RelaxedDensity.from_entries(K.ravel().tolist())
    if 'engineering' in data:
        e = data['engineering']
        try:
            return RelaxedDensity.from_engineering(float(e['E1']), float(e['E2']), float(e['G12']), float(e['nu12']))
        except KeyError as missing:
            raise ValidationError(f"Engineering constants are missing {missing}") from missing
    raise ValidationError("Material needs one of the keys isotropic, K, engineering")


def load_material(reference: Optional[str]) -> RelaxedDensity:
    if reference is None or str(reference).lower() == 'isotropic':
        return RelaxedDensity.isotropic()
    rd = material_from_dict(_read_json(reference))
    logger.info(f"Loaded material from {reference}: alpha+ = {rd.alpha_plus:.6g}, alpha- = {rd.alpha_minus:.6g}")
    return rd


def load_curve(reference: Optional[str], num_samples: int = 513) -> ReferenceCurve:
    if reference is None or str(reference).lower() == 'flat':
        spec = FLAT_UNIT
    else:
        spec = _read_json(reference)
    return build_reference(spec, num_samples=num_samples)


def load_frustration(reference: Optional[str], length: float = 1.0) -> FrustrationField:
    """None -> zero; 'M11,M12,M22' -> constant; CSV table t,M11,M12,M22; JSON {"constant": [[..],[..]]}."""
    if reference is None:
        return FrustrationField.zero(length)
    text = str(reference)
    if text.lower().endswith('.csv'):
        return FrustrationField.from_table(_read_csv(text))
    if text.lower().endswith('.json'):
        data = _read_json(text)
        if 'constant' not in data:
            raise ValidationError(f"Frustration file {text} needs a 'constant' matrix")
        return FrustrationField.constant(np.asarray(data['constant'], dtype=float), length)
    return FrustrationField.constant(parse_matrix(text), length)


def load_boundary(reference: Optional[str], ref: ReferenceCurve) -> BoundaryData:
    if reference is None or str(reference).lower() == 'identity':
        bd = BoundaryData.identity(ref)
    elif str(reference).lower() == 'moebius':
        bd = BoundaryData.moebius()
    else:
        bd = BoundaryData.from_dict(_read_json(reference))
    return bd.validate(ref.length)


def load_field(path: str) -> SymField2:
    return SymField2.from_table(_read_csv(path))


def load_framed_curve(path: str, bd: Optional[BoundaryData] = None) -> FramedCurve:
    return framed_curve_from_table(_read_csv(path), bd)
