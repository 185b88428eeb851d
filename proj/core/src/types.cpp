#include "gsw/types.hpp"

namespace gsw {

Tensor image_to_tensor(const Image& image) {
    Tensor t(3, image.height, image.width);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) t.at(c, y, x) = image.at(y, x, c);
    return t;
}

Image tensor_to_image(const Tensor& tensor) {
    require(tensor.channels == 3, "tensor_to_image: expected 3 channels");
    Image image(tensor.height, tensor.width);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) image.at(y, x, c) = tensor.at(c, y, x);
    return image;
}

}  // namespace gsw
