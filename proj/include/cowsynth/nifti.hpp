#ifndef COWSYNTH_NIFTI_HPP
#define COWSYNTH_NIFTI_HPP

#include <string>

#include "cowsynth/volume.hpp"

namespace cow {

// NIfTI-1 single-file volumes (.nii or .nii.gz). Only 3D payloads are
// accepted; data is converted to float32 on read. Throws std::runtime_error
// on missing files, malformed headers and unsupported payloads.
Volume load_volume(const std::string& path);
void save_volume(const Volume& v, const std::string& path);

// Mask variant: loads like a volume, then binarises with threshold > 0.5.
BinaryMask load_mask(const std::string& path);
void save_mask(const BinaryMask& m, const std::string& path);

// Case id from a file name: strips directory, .nii/.nii.gz, and a trailing
// _t2/_seg role suffix if present ("cow042_t2.nii.gz" -> "cow042").
std::string case_id_from_path(const std::string& path);

}  // namespace cow

#endif
