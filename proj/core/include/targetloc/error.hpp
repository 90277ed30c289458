#pragma once

#include <stdexcept>
#include <string>

namespace targetloc {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- raster / georeferencing ---
struct UnreadableRaster : Error { using Error::Error; };
struct MalformedWorldFile : Error { using Error::Error; };
struct UnsupportedBitDepth : Error { using Error::Error; };
struct SingularGeoTransform : Error { using Error::Error; };
struct BadStackManifest : Error { using Error::Error; };
struct TargetOutsideImage : Error { using Error::Error; };

// --- view synthesis ---
struct SingularTransform : Error { using Error::Error; };
struct PointAtInfinity : Error { using Error::Error; };
struct RejectionOverflow : Error { using Error::Error; };
struct InvalidCount : Error { using Error::Error; };
struct BadDatasetManifest : Error { using Error::Error; };

// --- network / training ---
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteActivation : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };
struct TargetOutOfGrid : Error { using Error::Error; };
struct DivergedLoss : Error { using Error::Error; };
struct BadWeightsFile : Error { using Error::Error; };

// --- baseline ---
struct ImageTooSmall : Error { using Error::Error; };
struct SupportOutOfBounds : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct NotEnoughMatches : Error { using Error::Error; };
struct RansacFailed : Error { using Error::Error; };

// --- evaluation ---
struct EmptyTrajectory : Error { using Error::Error; };
struct EmptyResults : Error { using Error::Error; };
struct WriteFailure : Error { using Error::Error; };

/// Invalid argument values (precondition violations not covered by a
/// more specific class above).
struct InvalidArgument : Error { using Error::Error; };

} // namespace targetloc
