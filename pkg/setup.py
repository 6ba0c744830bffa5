from setuptools import setup

setup(
   name='dtsssi',
   version='0.1.0',
   description='Discrete time self-similar processes with stationary increments: generation, '
               'verification and p-adic spectral analysis',
   packages=['dtsssi', 'dtsssi.core', 'dtsssi.generation', 'dtsssi.evaluation', 'dtsssi.spectral',
             'dtsssi.export', 'dtsssi.tests'],
   install_requires=["numpy",
                     "scipy",
                     "h5py",
                     "PyYAML",
                     "termcolor",
                     "terminaltables",
                     "multiprocess",
                    ],
   extras_require={'test': ["pytest"]},
   scripts=["Dtsssi.py"],
   zip_safe=False,
)
