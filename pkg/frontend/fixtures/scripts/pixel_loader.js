function firePixel(base, params) {
  var query = [];
  for (var key in params) {
    if (Object.prototype.hasOwnProperty.call(params, key)) {
      query.push(encodeURIComponent(key) + "=" + encodeURIComponent(params[key]));
    }
  }
  var img = new Image(1, 1);
  img.src = base + "?" + query.join("&");
  return img;
}
