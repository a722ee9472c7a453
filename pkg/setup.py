try:
    from setuptools import setup, find_packages
except ImportError:
    from ez_setup import use_setuptools
    use_setuptools()
    from setuptools import setup, find_packages

import io
import os

here = os.path.abspath(os.path.dirname(__file__))
with io.open(os.path.join(here, 'README.md'), encoding='utf8') as f:
    README = f.read()

try:
    with io.open(os.path.join(here, 'CHANGELOG.md'), encoding='utf8') as f:
        CHANGES = f.read() or ''
except IOError:
    CHANGES = ''


def parse_requirements(filename):
    with io.open(os.path.join(here, filename), encoding='utf8') as f:
        return [line.strip() for line in f
                if line.strip() and not line.startswith('#')]


setup(name='rungelab',
    version='0.1.0',
    description='Numerical experiments on Runge approximation and stability for '
                'time-harmonic Maxwell equations.',
    long_description=README + '\n\n' + CHANGES,
    long_description_content_type='text/markdown',
    license='MIT',
    packages=find_packages(exclude=['tests', 'examples', 'examples.*']),
    python_requires='>=3.9',
    install_requires=parse_requirements('requirements.txt'),
    extras_require={'test': ['pytest>=7']},
    entry_points={'console_scripts': ['rungelab=rungelab.cli:main']},
    zip_safe=False)
